"""HTTP service wrapping the core package; the ASGI app lives in ``iccbf_rl.service.app``."""
