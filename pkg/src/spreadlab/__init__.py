"""Order-book liquidity analytics, maxSpread calibration and LP incentive evaluation."""

__version__ = "0.1.0"
