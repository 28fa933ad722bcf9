"""Reference system and channel parameters used as defaults everywhere.

The values describe a 1 km ground link at 1550 nm with a Tx--Rx line of sight
of 800 m and a reflecting surface (or relay) placed on the constant-distance
ellipse at x = 200 m.
"""

WAVELENGTH = 1550e-9          # m
BEAM_WAIST = 2.5e-3           # m
BANDWIDTH = 1e9               # Hz
NOISE_PSD_DBM_PER_MHZ = -114.0
ATTENUATION_DB_PER_M = 0.43e-3
CN2 = 50e-15                  # m^(-2/3)
IMPEDANCE = 377.0             # Ohm
TOTAL_POWER = 0.4             # W
RESPONSIVITY = 1.0            # A/W
IRS_SIDE = 1.0                # m
LENS_RADIUS = 0.10            # m
LOS_DISTANCE = 800.0          # m, Tx--Rx line of sight
END_TO_END = 1000.0           # m, d1 + d2
FOCAL_DISTANCE = 250.0        # m, quadratic profile
SURFACE_X = 200.0             # m, reference surface/relay position
THRESHOLD_SNR_DB = 0.0

# "much larger / much smaller" comparisons are operationalised as a ratio of 10.
REGIME_RATIO = 10.0
# Margin kept away from the degenerate ellipse end points, relative to d3.
ELLIPSE_MARGIN = 1e-3


def noise_variance(psd_dbm_per_mhz: float = NOISE_PSD_DBM_PER_MHZ,
                   bandwidth: float = BANDWIDTH) -> float:
    """Noise power N0*B in watts from a PSD given in dBm/MHz."""
    watts_per_hz = 10.0 ** (psd_dbm_per_mhz / 10.0) * 1e-3 / 1e6
    return watts_per_hz * bandwidth
