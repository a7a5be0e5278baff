"""Flow integration, score conversion, annealing and decoding."""

from .decode import decode_many, decode_structure, decode_unconditional, resolve_size
from .integrate import (
    ALPHA_OFF,
    DELTA,
    IntegrationError,
    SamplerConfig,
    anneal_weight,
    annealed_velocity,
    check_alpha,
    flow_to_score,
    g_of_t,
    integrate,
    integrate_ode,
    integrate_sde,
)
from .toy import MixtureFlow
