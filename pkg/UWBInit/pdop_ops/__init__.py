from .pdop_ops_interface import PDOP_METHODS, estimate_pdop
