"""Knapp-type quasimodes on compact space forms and the norms that measure their concentration."""
from .errors import KnappError
from .flat import (
    BumpProfile,
    FlatMode,
    KnappTube,
    SpaceFormMode,
    evaluate_torus_mode,
    knapp_tube,
    make_bump,
    quasimode_defect,
    select_frequency,
    spaceform_mode,
    spectral_window_check,
)
from .geometry import (
    align_lattice,
    choose_axis_line,
    choose_base_point_sphere,
    equator_stabilizer,
    geodesic_period,
    make_flat_quotient,
    make_sphere_quotient,
    rigid_motion,
    translation,
)
from .norms import (
    flat_domain,
    flat_tube_domain,
    l2_exact_parseval,
    lp_norm,
    lp_norms,
    sphere_domain,
    sphere_tube_domain,
    tube_lp_norm,
    tube_min_abs,
)
from .sphere import deck_sum_mode, highest_weight, sphere_eigenvalue

evaluate_highest_weight = highest_weight

__version__ = "0.1.0"
