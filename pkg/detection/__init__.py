from detection.detectors import (
    detect_all,
    detect_cla,
    detect_dl,
    detect_er,
    detect_et,
    detect_mc,
    detect_oe,
    detect_rsp,
)
from detection.oracle import oracle_detect

__all__ = [
    "detect_all",
    "detect_cla",
    "detect_dl",
    "detect_er",
    "detect_et",
    "detect_mc",
    "detect_oe",
    "detect_rsp",
    "oracle_detect",
]
