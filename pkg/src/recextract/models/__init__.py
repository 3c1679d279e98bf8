from .base import Batch, SequentialRecommender
from .narm import NARM
from .transformer import BERT4Rec, SASRec

ARCHITECTURES = {"narm": NARM, "sasrec": SASRec, "bert4rec": BERT4Rec}


def build_model(arch, **hparams):
    try:
        cls = ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
    if arch == "narm":
        hparams = {**hparams, "n_layers": 1}
    return cls(**hparams)


__all__ = ["ARCHITECTURES", "BERT4Rec", "Batch", "NARM", "SASRec", "SequentialRecommender", "build_model"]
