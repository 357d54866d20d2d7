"""Embedded CMC hypersurfaces S^k x S^l x S^1 in S^{n+1}.

Profile-curve ODE, half-period shooting, continuation of the solution
curve in (a, H, T) space, and volume comparisons with Clifford
hypersurfaces.
"""

from .errors import (
    CMCError,
    DomainBreach,
    NoBracket,
    NoConvergence,
    NonAdmissible,
    NotSpanned,
    RankDrop,
    SingularJacobian,
    StallError,
    StepSizeUnderflow,
)
from .family import (
    CliffordDatum,
    FamilyParams,
    clifford_datum,
    clifford_mean_curvature,
    clifford_volume,
    sphere_volume,
    umbilical_mean_curvature,
)
from .odecore import ProfileState, SensitivityState, ToleranceSpec, integrate
from .shooting import ShootingJacobian, ShootingPoint, evaluate, find_seed, jacobian, solve
from .continuation import GammaCurve, SpecialPoints, detect_special, tangent, trace, trace_family
from .geometry import ProfileCurve, VolumeReport, check_embedded, reconstruct, volume, yau_check

__version__ = "0.1.0"
