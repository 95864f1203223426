/* C interface to the gridcharge library.
 *
 * Handles are opaque. Every fallible call returns a gc_status; on failure the
 * message is available from gc_last_error() on the same thread until the next
 * call. Strings handed out by the library are released with gc_string_free().
 * JSON documents follow the layout described in README.md.
 */
#ifndef GRIDCHARGE_H
#define GRIDCHARGE_H

#include <stddef.h>

#if defined(GRIDCHARGE_BUILDING)
#define GC_API __attribute__((visibility("default")))
#else
#define GC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gc_status {
  GC_OK = 0,
  GC_E_INVALID = 1,
  GC_E_IO = 2,
  GC_E_PARSE = 3,
  GC_E_TOPOLOGY = 4,
  GC_E_CONVERGENCE = 5,
  GC_E_SATURATED = 6,
  GC_E_SINGULAR = 7,
  GC_E_UNSTABLE = 8,
  GC_E_NUMERIC = 9,
  GC_E_INTERNAL = 10
} gc_status;

typedef struct gc_grid gc_grid;

GC_API const char* gc_version(void);
GC_API const char* gc_last_error(void);
GC_API const char* gc_status_name(gc_status s);
GC_API void gc_string_free(char* s);

GC_API gc_status gc_grid_load(const char* path, gc_grid** out);
GC_API gc_status gc_grid_parse(const char* json_text, gc_grid** out);
/* Copy with every non-EV load multiplied by factor. */
GC_API gc_status gc_grid_scale_loads(const gc_grid* g, double factor, gc_grid** out);
GC_API void gc_grid_free(gc_grid* g);
GC_API gc_status gc_grid_size(const gc_grid* g, int* n_bus, int* n_evcs);
GC_API gc_status gc_sending_bus(const gc_grid* g, int bus, int* parent);

/* P in kW to A, sign preserved. */
GC_API gc_status gc_demand_currents(const double* p_kw, size_t p, double vdc_star, double* out_a);

/* VSI at the equilibrium for setpoint alpha (length p; NULL means zero). */
GC_API gc_status gc_vsi(const gc_grid* g, const double* alpha, size_t p, char** report_json);

/* algorithm 1 or 2. trace_csv may be NULL. */
GC_API gc_status gc_optimize(const gc_grid* g, int algorithm, const char* config_json, char** result_json,
                             char** trace_csv);

/* Nonlinear simulation. trajectory_csv may be NULL. */
GC_API gc_status gc_simulate(const gc_grid* g, const char* scenario_json, char** summary_json,
                             char** trajectory_csv);

/* Modal analysis at a setpoint. modal_csv may be NULL. */
GC_API gc_status gc_eig(const gc_grid* g, const char* config_json, char** summary_json, char** modal_csv);

/* Wait & save offer table. Either output may be NULL. */
GC_API gc_status gc_offers(const char* request_json, char** offers_csv, char** offers_json);

#ifdef __cplusplus
}
#endif

#endif
