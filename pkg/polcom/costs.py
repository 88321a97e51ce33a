# nodes visited by the cross-dimension list search of one greedy intersection
# round before giving up
GIA_NODE_BUDGET = 2_000_000

# candidate centers enumerated by the single-cover oracle
MAX_1_COVER_BUDGET = 1_000_000

# K-subsets of maximal coverable groups enumerated by the K-cover oracle
MAX_K_COVER_BUDGET = 2_000_000

# deterministic policies enumerated by the brute-force planner check
POLICY_ENUMERATION_BUDGET = 1 << 16

# max-norm comparisons are `dist <= eps + slack` with slack this many units in
# the last place of `max|x| + eps`; it absorbs rounding of midpoint centers
COVER_SLACK_ULPS = 4

# value comparisons `v >= v_star - eps_value - VALUE_SLACK`
VALUE_SLACK = 1e-9

# distribution checks
PROBABILITY_ATOL = 1e-12
GMM_WEIGHT_ATOL = 1e-9

# gradient cover defaults
DEFAULT_STEP_FRACTION = 0.05
DEFAULT_MAX_ITERS = 2000
DEFAULT_TOLERANCE = 1e-10
DEFAULT_ASSIGNMENT_LOGIT = 10.0
# cap on logit / temperature when pinning a task to its covering center
MAX_ASSIGNMENT_LOGIT = 700.0
LINE_SEARCH_HALVINGS = 40
STALL_WINDOW = 50

JSON_SCHEMA_VERSION = 1
