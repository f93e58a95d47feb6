SCHEMA_VERSION = 1

ROW_SUM_TOL = 1e-10
PROB_FLOOR = 1e-15
TRUNCATION_TOL = 1e-4

DEFAULT_POWER_BUDGET = 5.0
DEFAULT_CHANNEL_DIMENSIONS = 2
DEFAULT_X_POINTS = 121
DEFAULT_X_SPAN_FACTOR = 3.0
DEFAULT_S_POINTS = 101
DEFAULT_S_SPAN_FACTOR = 5.0
DEFAULT_Z_POINTS = 151
DEFAULT_Y_POINTS = 151
DEFAULT_NOISE_SPAN_FACTOR = 5.0

BA_MAX_ITERS = 5000
BA_REL_TOL = 1e-9
BA_LAMBDA_TOL = 1e-6
BA_LAMBDA_MAX_INIT = 1.0
BA_LAMBDA_GROWTH = 2.0
BA_LAMBDA_MAX_LIMIT = 1e12
BUDGET_TOL = 1e-6

RD_MAX_ITERS = 5000
RD_REL_TOL = 1e-9
RD_SLOPE_COUNT = 24
RD_SLOPE_MIN = 0.05
RD_SLOPE_MAX = 50.0
RD_SLOPE_EXTENSION_FACTOR = 100.0
RD_SLOPE_EXTENSION_COUNT = 6
RD_MAX_EXTENSIONS = 4
MSST_SLACK = 1e-9

# 0..1 step 0.1, 1..5 step 0.5, 5..30 step 5
DEFAULT_MU_GRID = (
    tuple(round(0.1 * i, 10) for i in range(11))
    + tuple(1.0 + 0.5 * i for i in range(1, 9))
    + tuple(5.0 + 5.0 * i for i in range(1, 6))
)

DEFAULT_MIMO_POWER_BUDGET = 5.0
DEFAULT_STATE_CORRELATION = 0.5
HEURISTIC_BETA_COUNT = 11
EXHAUSTIVE_POINTS = 2001
SCA_MAX_OUTER = 50
SCA_REL_TOL = 1e-6
SCA_MONOTONE_SLACK = 1e-8
SCA_START_SHRINK = 1e-3
SCA_SINGULAR_PERTURBATION = 1e-8
EIGEN_TOL = 1e-12

BARRIER_T0 = 1.0
BARRIER_GROWTH = 10.0
BARRIER_GAP_TOL = 1e-8
BARRIER_NEWTON_TOL = 1e-10
BARRIER_MAX_NEWTON = 200
BARRIER_MAX_STAGES = 40
BARRIER_STALL_DECREMENT = 1e-6
ARMIJO_C = 1e-4
ARMIJO_MIN_STEP = 1e-20
FD_STEP = 1e-5

GOLDEN_REL_TOL = 1e-6
THREADS_ENV = "CAS_OPTIM_THREADS"
DEFAULT_OUTPUT_TEMPLATE = "{{ kind }}-seed{{ seed }}.csv"
