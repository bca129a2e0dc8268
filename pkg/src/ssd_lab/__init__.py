"""Rotated QAM signal-space diversity: lattice-angle constellations, a
low-complexity sphere demapper, operation counting and a BER harness."""

from .channel import ChannelConfig, Observation, sample_channel, sigma_from_esn0, transmit
from .complexity import TABLE_I, OpCounters, analytic_cost, reduction_report, sphere_cost
from .constellation import (
    ConstellationSpec,
    angle_for,
    build_spec,
    coords_from_t_i,
    coords_from_t_q,
    dvbt2_angle,
    lattice_coords,
    map_bits,
    q_delay,
    q_undelay,
)
from .demap import equalize, hard_decision, llr_exact, llr_maxlog_full, mmse_demap, sphere_demap, window
from .fec import DecoderConfig, default_code, encode, load_alist, minsum_decode, parse_alist
from .sim import SimConfig, make_config, run_ber, run_llr_compare

__version__ = "0.1.0"
