"""Packet-reception-probability localization for BLE beacon networks.

Counts of decoded advertising packets, not signal strength, carry the
primary range information here: each (receiver, window, beacon) count
is binomial with a reception probability tied to distance, beacon
settings, and the geometry between the endpoints.  The package bundles
the observation model, an adaptive MCMC engine for training and
localization, receiver-pair distance estimation, RSSI baselines, a
packet-log simulator, and two ready-made desk-scale scenarios.
"""

from ._kernels import active_path
from .baselines import (
    RssiPathModel,
    bayesian_rssi_localize,
    fit_rssi_model,
    fused_localize,
    rssi_log_likelihood,
)
from .contact_tracing import (
    BeaconDistanceResult,
    DistancePosterior,
    PairQuery,
    build_pair_query,
    estimate_pair_distance,
    infer_beacon_distances,
    infer_pair_distance,
    triangle_log_potential,
    two_step_pair_distance,
)
from .errors import (
    DataMismatchError,
    GaugeError,
    InitializationError,
    InsufficientDataError,
    InsufficientGeometryError,
    InvalidInputError,
    OutOfBoundsError,
    SaturationError,
    SingularDistanceError,
)
from .geometry import (
    Beacon,
    GeometricElement,
    Layout,
    Rect,
    classify_element,
    distance,
    element_map,
    layout_from_json,
    layout_to_json,
    load_layout,
    save_layout,
    segment_crossings,
)
from .inference import (
    LocalizationResult,
    McmcConfig,
    PosteriorSamples,
    TrackResult,
    TrainingDataset,
    TrainingSpot,
    TrainResult,
    WindowData,
    assemble_window_data,
    derive_standardization,
    grid_map,
    layout_with_recovered,
    localize,
    mcmc_sample,
    position_log_density,
    track,
    train,
)
from .presets import (
    Preset,
    get_preset,
    select_beacons,
    select_spots,
    with_known_beacons,
)
from .prp_model import (
    LinkParams,
    ObservationWindow,
    PrpModel,
    Standardization,
    count_log_likelihood,
    estimate_prp,
    link_eta,
    link_g,
    load_model,
    logit,
    model_from_json,
    model_to_json,
    packets_sent,
    rebase_link_params,
    sampling_bias,
    save_model,
    sigmoid,
    truncated_rssi_mean,
)
from .rng import derive_seed, substream
from .simulator import (
    SimConfig,
    Trajectory,
    generate_trajectory,
    read_packet_log,
    read_trajectory,
    simulate_packets,
    simulate_truncated_rssi,
    stationary_trajectory,
    write_packet_log,
    write_trajectory,
)

__version__ = "0.1.0"
