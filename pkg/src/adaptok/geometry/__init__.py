"""Chain geometry: conventions, metrics, secondary structure, synthetic data."""

from .align import tm_align
from .coords import (
    MAX_LENGTH,
    NM_TO_ANGSTROM,
    as_coords,
    center,
    kabsch_rmsd,
    kabsch_rotation,
    random_rotation,
    superpose,
    tm_d0,
    tm_score,
)
from .frechet import frechet_distance, frechet_from_stats, gaussian_stats
from .io import read_any, read_coords, read_pdb_ca, write_coords
from .sse import COIL, HELIX, SHEET, SseThresholds, assign_sse, sse_fractions
from .synth import BOND_NM, CLASSES, build_chain, ideal_helix, ideal_strand, min_nonbonded, synth_chain, synth_corpus
