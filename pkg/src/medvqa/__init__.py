"""Medical visual question answering toolkit.

Corpus handling, QA synthesis from radiology reports, joint-embedding
models (CNN image encoder, BiLSTM question encoder, fused classifier),
deterministic training, and an HTTP inference service.
"""

__version__ = "0.1.0"

from . import corpus, errors, images, models, service, synth, training

__all__ = ["corpus", "errors", "images", "models", "service", "synth", "training", "__version__"]
