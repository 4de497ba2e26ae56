"""Link-level MIMO-OFDM simulation with a superimposed-pilot iterative
receiver (joint channel estimation, detection, and decoding)."""

from .channel import (ChannelConfig, ChannelRealization, CorrelationSet, NoiseSpec,
                      apply_channel, estimate_correlations, generate_channel)
from .detect import DetectorOutput, SoftSymbolSet, extrinsic_llr, mmse_ic_detect, soft_remap
from .errors import (ConfigurationError, DimensionCapError, EndpointError,
                     EndpointTimeout, ShapeMismatchError, WireFormatError)
from .fec import CodeConfig, decode, encode, make_code
from .grid import (FrameConfig, ModulationSpec, OpPilotPattern, PilotSet, ResourceGrid,
                   build_op_grid, build_sip_grid, generate_pilots, modulate, qam_spec,
                   superimpose)
from .harness import (SimReport, SweepConfig, VariantSpec, run_sweep, throughput,
                      wilson_interval)
from .linear import (DespreadConfig, despread, lmmse_interpolate, ls_initial,
                     refined_lmmse)
from .receiver import FrameResult, JcddConfig, run_jcdd, run_op_receiver
from .vmp import soft_transmit_stats, vmp_estimate, vmp_l_estimate

__version__ = "0.1.0"
