"""Shared reference measurements used as test fixtures.

PSNR_ROWS: per-plane PSNRs from two long-GOP encodes (low-delay and
random-access referencing) of a 1080p clip at five QPs, with the expected
weighted global PSNR (6*Y + U + V) / 8 for each row.

RD_POINTS: the same encodes' (bitrate kbps, global PSNR, VMAF) points,
used as realistic rate-quality curves.
"""

# (qp, psnr_y, psnr_u, psnr_v, expected_psnr611)
PSNR_ROWS_LOW_DELAY = [
    (22, 39.3615, 43.8341, 45.1895, 40.649075),
    (27, 37.4569, 42.4572, 43.0289, 38.7784375),
    (32, 35.5552, 41.1415, 41.1733, 36.95575),
    (37, 33.5596, 39.8365, 39.3749, 35.071125),
    (42, 31.3267, 38.6067, 37.5532, 33.0150125),
]

PSNR_ROWS_RANDOM_ACCESS = [
    (22, 39.3933, 44.2801, 45.36, 40.7499875),
    (27, 37.8607, 43.2769, 44.1146, 39.3194625),
    (32, 36.2269, 42.1619, 42.3841, 37.738425),
    (37, 34.2932, 40.8477, 40.5033, 35.888775),
    (42, 32.2309, 39.7232, 38.7187, 33.9784125),
]

PSNR_ROWS = PSNR_ROWS_LOW_DELAY + PSNR_ROWS_RANDOM_ACCESS

# (bitrate_kbps, psnr611, vmaf)
RD_POINTS_LOW_DELAY = [
    (15946.1664, 40.649075, 99.973599),
    (4917.3664, 38.7784375, 97.277038),
    (2235.6088, 36.95575, 87.189286),
    (1124.8256, 35.071125, 73.570743),
    (561.5584, 33.0150125, 57.533403),
]

RD_POINTS_RANDOM_ACCESS = [
    (14849.0832, 40.7499875, 99.95928),
    (4916.7528, 39.3194625, 98.15996),
    (2239.5712, 37.738425, 90.588555),
    (1106.396, 35.888775, 78.513701),
    (572.7824, 33.9784125, 64.073401),
]

# per-segment averages the adaptive runs are checked against:
# a constant-QP 1080p run averaging 11205.77 kbps at 38.45 dB / VMAF 96.26
DEFAULT_RUN_AVG_BITRATE = 11205.77
DEFAULT_RUN_AVG_PSNR = 38.45
DEFAULT_RUN_AVG_VMAF = 96.26
