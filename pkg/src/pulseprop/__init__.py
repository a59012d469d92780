"""pulseprop: artifact detection for photoplethysmogram pulses.

Preprocessing (band-pass, pulse segmentation, resampling), a statistical
surrogate-expert labeler, class rebalancing, graph label propagation with
supervised baselines, and a full evaluation suite, plus synthetic data
generators that make every piece verifiable without clinical recordings.
"""

__version__ = "0.1.0"
