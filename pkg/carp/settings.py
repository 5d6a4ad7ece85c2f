import os

from django.conf import settings


"""Relaxation parameter used for the Cholesky factor and every ADMM step."""
DEFAULT_RHO = getattr(settings, "CARP_DEFAULT_RHO", 1.0)

"""Multiplicative step-size of plain CARP paths."""
DEFAULT_T = getattr(settings, "CARP_DEFAULT_T", 1.05)

"""Fine step-size used by CARP-VIZ after the first fusion."""
VIZ_T = getattr(settings, "CARP_VIZ_T", 1.01)

"""Coarse step-size used by CARP-VIZ until the first fusion."""
VIZ_BURN_IN_T = getattr(settings, "CARP_VIZ_BURN_IN_T", 1.1)

"""Multiplicative step-size of CBASS paths."""
CBASS_T = getattr(settings, "CARP_CBASS_T", 1.01)

"""Maximum number of step halvings per back-tracked iteration."""
MAX_BACKTRACK = getattr(settings, "CARP_MAX_BACKTRACK", 10)

"""Maximum number of accepted steps on a single path."""
ITERATION_CAP = getattr(settings, "CARP_ITERATION_CAP", 10**7)

"""Relative change in ``U`` at which exact solvers stop."""
TOL = getattr(settings, "CARP_TOL", 1e-7)

"""Iteration limit of an exact solve at one regularization level."""
MAX_ITER = getattr(settings, "CARP_MAX_ITER", 100000)

"""Scale of the automatic initial regularization level."""
EPSILON_SCALE = getattr(settings, "CARP_EPSILON_SCALE", 1e-6)

"""Lower bound of the automatic nearest neighbour count."""
MIN_NEIGHBORS = getattr(settings, "CARP_MIN_NEIGHBORS", 3)

"""Store every n-th iterate (iterates with fusion events are always kept)."""
STORE_EVERY = getattr(settings, "CARP_STORE_EVERY", 1)

"""Relaxation parameter of the fused phase that settles a path on its means."""
SETTLE_RHO = getattr(settings, "CARP_SETTLE_RHO", 1e4)

"""Step-size of the coarse path used to find the end of an exact grid."""
SCOUT_T = getattr(settings, "CARP_SCOUT_T", 1.2)

"""Radius of the half moons and outer circle generators."""
SHAPE_RADIUS = getattr(settings, "CARP_SHAPE_RADIUS", 1.0)

"""Ratio between inner and outer radius of the two circles generator."""
CIRCLE_FACTOR = getattr(settings, "CARP_CIRCLE_FACTOR", 0.5)

"""Format of every floating point number written to disk."""
FLOAT_FORMAT = getattr(settings, "CARP_FLOAT_FORMAT", ".17g")


def get_output_dir():
    """
    Default output directory of the management commands: the
    ``CARP_OUTPUT_DIR`` setting, then the environment variable of the same
    name, then the working directory.
    """
    return getattr(settings, "CARP_OUTPUT_DIR", None) or os.environ.get(
        "CARP_OUTPUT_DIR", os.curdir
    )
