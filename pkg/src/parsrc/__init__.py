"""Parallel-serial CIC and halfband sample-rate conversion."""

from .analysis import (
    SpectrumReport,
    ToneSpec,
    alias_attenuation_experiment,
    gen_multitone,
    multitone_experiment,
    spectrum,
)
from .cic import (
    AdderMatrix,
    CicConfig,
    CicState,
    ParallelCic,
    build_adder_matrix,
    cic_magnitude_response,
    parallel_comb_step,
    parallel_downsample,
    parallel_integrate_step,
    run_parallel_cic,
    run_serial_cic,
)
from .errors import (
    ClipError,
    DesignInfeasible,
    InsufficientData,
    InvalidFrame,
    InvalidLaneCount,
    InvalidScaling,
    MalformedStream,
    SrcError,
    UnsupportedFactor,
)
from .halfband import (
    FirState,
    HalfbandCoeffs,
    HalfbandSpec,
    design_halfband,
    fir_magnitude_response,
    halfband_decimate_two_path,
    parallel_fir_step,
    quantize_coeffs,
    serial_fir,
)
from .pipeline import FactorPlan, ResponseReport, SrcConfig, cascade_response, plan_factor, run_serial_reference, run_src
from .stream import (
    ParallelFrame,
    ParallelStream,
    SerialStream,
    deserialize_index,
    parallel_to_serial,
    read_stream,
    serial_to_parallel,
    serialize_index,
    write_stream,
)

__version__ = "0.1.0"
