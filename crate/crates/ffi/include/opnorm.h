#ifndef OPNORM_H
#define OPNORM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define OPNORM_OK 0

#define OPNORM_ERR_NULL_POINTER 1

#define OPNORM_ERR_INVALID_ARGUMENT 2

#define OPNORM_ERR_DIMENSION 3

#define OPNORM_ERR_UNSUPPORTED_ORDER 4

#define OPNORM_ERR_SINGULAR 5

#define OPNORM_ERR_DOMAIN 6

#define OPNORM_ERR_DEGENERATE 7

#define OPNORM_ERR_PROPAGATION 8

#define OPNORM_ERR_MISSING_ORDER 9

#define OPNORM_ERR_NOT_POSITIVE_DEFINITE 10

#define OPNORM_ERR_INTERNAL 11

#define OPNORM_ERR_PANIC 12

#define OPNORM_MODEL_TWO_BODY 0

#define OPNORM_MODEL_TWO_BODY_NONDIM 1

#define OPNORM_MODEL_CR3BP 2

#define OPNORM_NORM_2 0

#define OPNORM_NORM_INF2 1

#define OPNORM_NORM_FROB2 2

#define OPNORM_NORM_2_UPPER_FLATTEN 3

#define OPNORM_NORM_FROBINF_UPPER 4

#define OPNORM_GUIDANCE_PROPAGATION_VV 0

#define OPNORM_GUIDANCE_MISS_E1 1

#define OPNORM_GUIDANCE_MISS_E2 2

#define OPNORM_GUIDANCE_VELOCITY_ERR_1 3

#define OPNORM_GUIDANCE_VELOCITY_ERR_2 4

#define OPNORM_GUIDANCE_RENDEZVOUS_F1 5

#define OPNORM_INDEX_NU_STAR 0

#define OPNORM_INDEX_NU_2 1

#define OPNORM_INDEX_NU_FROB2 2

#define OPNORM_INDEX_NU_INF2 3

#define OPNORM_INDEX_NU_BOX 4

#define OPNORM_INDEX_NU_2_UPPER 5

#define OPNORM_INDEX_DEMON 6

#define OPNORM_INDEX_TEMON 7

#define OPNORM_INDEX_BETH 8

#define OPNORM_MEASUREMENT_ANGLES 0

#define OPNORM_MEASUREMENT_UNIT_VECTOR 1

/*
 Propagated STM and STTs along a reference trajectory.
 */
typedef struct OpnormStack OpnormStack;

/*
 A partially symmetric (1,m)-tensor.
 */
typedef struct OpnormTensor OpnormTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *opnorm_version(void);

/*
 Copy the calling thread's last error message into `buf` (truncated and
 NUL-terminated). Returns the buffer size needed for the whole message.

 # Safety
 `buf` must be null or valid for `len` bytes.
 */
uintptr_t opnorm_last_error(char *buf, uintptr_t len);

/*
 Build a tensor from `dim_out * dim_in^order` entries, output index
 slowest. The input slots are symmetrized.

 # Safety
 `data` must be valid for `len` doubles and `out` writable.
 */
int32_t opnorm_tensor_new(uintptr_t dim_out,
                          uintptr_t dim_in,
                          uintptr_t order,
                          const double *data,
                          uintptr_t len,
                          OpnormTensor **out);

/*
 # Safety
 `t` must be null or a handle from this library not yet freed.
 */
void opnorm_tensor_free(OpnormTensor *t);

/*
 # Safety
 `t` must be a live handle; the outputs writable.
 */
int32_t opnorm_tensor_shape(const OpnormTensor *t,
                            uintptr_t *dim_out,
                            uintptr_t *dim_in,
                            uintptr_t *order);

/*
 Copy the entries into `buf`, which must hold exactly the tensor size.

 # Safety
 `t` must be a live handle and `buf` valid for `len` doubles.
 */
int32_t opnorm_tensor_data(const OpnormTensor *t, double *buf, uintptr_t len);

/*
 Tensor norm of the given `OPNORM_NORM_*` kind. When `maximizer` is not
 null it receives the unit maximizer (`dim_in` entries), or NaNs for kinds
 without one.

 # Safety
 `t` must be a live handle, `value` writable, `maximizer` null or valid
 for `maximizer_len` doubles.
 */
int32_t opnorm_tensor_norm(const OpnormTensor *t,
                           uint32_t kind,
                           uint64_t seed,
                           double *value,
                           double *maximizer,
                           uintptr_t maximizer_len);

/*
 `D`-weighted 2-norm with `D` given row-major as `dim_in x dim_in`.

 # Safety
 As `opnorm_tensor_norm`; `d` valid for `dim_in * dim_in` doubles.
 */
int32_t opnorm_tensor_norm_2d(const OpnormTensor *t,
                              const double *d,
                              uint64_t seed,
                              double *value,
                              double *maximizer,
                              uintptr_t maximizer_len);

/*
 Propagate the STM and STTs up to `order` (1..3) from `x0` (6 entries).
 `parameter` is `mu` for the two-body model and the mass ratio for the
 CR3BP; tolerances `<= 0` select the defaults.

 # Safety
 `x0` valid for 6 doubles; `out` writable.
 */
int32_t opnorm_stt_propagate(uint32_t model_kind,
                             double parameter,
                             const double *x0,
                             double t0,
                             double tf,
                             uint32_t order,
                             double rtol,
                             double atol,
                             OpnormStack **out);

/*
 # Safety
 `s` must be null or a handle from this library not yet freed.
 */
void opnorm_stt_free(OpnormStack *s);

/*
 Final reference state (6 entries) and STM (36 entries, row-major).
 Either buffer may be null.

 # Safety
 `s` must be a live handle; non-null buffers valid for their sizes.
 */
int32_t opnorm_stt_final(const OpnormStack *s, double *xf, double *phi);

/*
 A copy of the order-2 or order-3 STT as a new tensor handle.

 # Safety
 `s` must be a live handle; `out` writable.
 */
int32_t opnorm_stt_tensor(const OpnormStack *s, uint32_t order, OpnormTensor **out);

/*
 Guidance error tensor of an `OPNORM_GUIDANCE_*` kind, with the condition
 number of the position-velocity STM block (`condition` may be null).

 # Safety
 `s` must be a live handle; `out` writable.
 */
int32_t opnorm_guidance_tensor(const OpnormStack *s,
                               uint32_t kind,
                               OpnormTensor **out,
                               double *condition);

/*
 Nonlinearity index of an `OPNORM_INDEX_*` kind. `order` selects the
 DEMoN, TEMoN or beth order and `radius` the ball for TEMoN and beth; both
 are ignored by the quotient indices.

 # Safety
 `s` must be a live handle; `value` writable.
 */
int32_t opnorm_nonlinearity_index(const OpnormStack *s,
                                  uint32_t kind,
                                  uint32_t order,
                                  double radius,
                                  uint64_t seed,
                                  double *value);

/*
 2-norm of the state-space measurement curvature tensor at relative
 position `r` (3 entries).

 # Safety
 `r` valid for 3 doubles; `value` writable.
 */
int32_t opnorm_hbar_norm(uint32_t model_kind, const double *r, uint64_t seed, double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPNORM_H */
