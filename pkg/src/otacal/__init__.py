"""Phasor-domain simulation and estimation for over-the-air antenna array phase calibration."""

from .array import (
    C_LIGHT,
    AntennaHardware,
    DelayTable,
    Panel,
    Scene,
    User,
    apply_aging,
    apply_compensation,
    apply_oscillator_drift,
    delay_radians,
)
from .calibrators import (
    AlignmentResult,
    AmbiguityError,
    Branch,
    DisconnectedGraphError,
    FCalibration,
    RCalibration,
    SearchBounds,
    align_f_f_dual_freq,
    align_f_f_genie,
    align_f_f_to_r,
    align_r_r,
    build_bounds,
    f_calibrate_known_coupling,
    r_calibrate_pairwise,
)
from .measurement import (
    DualFrequencyObservation,
    MeasurementConfig,
    MeasurementRecord,
    measure_bidirectional,
    measure_dual_frequency,
    measure_one_way,
)
from .phase import circ_distance, circular_rmse, coherent_average, wrap_2pi, wrap_signed

__version__ = "0.1.0"
