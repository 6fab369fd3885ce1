"""Synthetic SAGIN world: geometry, mobility, traffic and labeled factor datasets."""

from atmas.scenario.dataset import (
    ALL_FACTORS,
    FACTOR_COLUMNS,
    RAW_COLUMNS,
    Dataset,
    FactorVector,
    Label,
    LabeledWindow,
    generate_dataset,
    generate_streams,
    mix_streams,
)
from atmas.scenario.geometry import (
    BeamMissesEarth,
    BeamOutOfRange,
    Geometry,
    NoCoverage,
    assign_bs,
    beam_footprint_radius,
    compute_elevation,
)
from atmas.scenario.mobility import (
    MobilityProfile,
    Trajectory,
    compute_heading_azimuth,
    compute_sinuosity,
    generate_trajectory,
)
from atmas.scenario.traffic import ServiceType, TrafficProfile, generate_traffic
