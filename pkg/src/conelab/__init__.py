"""conelab: a numerical laboratory for warped cones over group actions.

Discretizes compact spaces with group actions into nets, approximates the
warped metric on level sets by shortest-path graphs, certifies spectral gaps
of the induced averaging operators, and measures embedding distortion of the
level-set nets against the spectral lower bound.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, config_from_text, default_config
from .distortion import (
    audit_embedding,
    bourgain_embed,
    distortion_lower_bound,
    embedding_distortion,
)
from .nets import Net, build_grid_net, build_net, snap_to_net, verify_net, voronoi_weights
from .spaces import (
    CompactSpace,
    GroupAction,
    Word,
    apply,
    apply_word,
    ball_measure,
    base_distance,
    circle_rotation_action,
    identity_action,
    lipschitz_estimate,
    make_space,
    sl2_torus_action,
    su2_action,
)
from .spectral import (
    MarkovOperator,
    adapt_net_to_action,
    build_markov,
    dense_mean_zero_norm,
    kappa_lower_bound,
    mean_zero_norm,
    p_sweep,
)
from .warped import (
    WarpedLevelGraph,
    all_distances,
    ball_cover_bound,
    build_level_graph,
    distance_matrix,
    half_bound_coefficient,
    half_measure_radius,
    pair_measure_within,
    warped_distance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
