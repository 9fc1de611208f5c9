"""Runtime prediction for distributed dataflow jobs."""

try:
    from . import _bellamy
except ImportError:
    import _bellamy

BellamyError = _bellamy.BellamyError
BellModel = _bellamy.BellModel
Model = _bellamy.Model
RunRecord = _bellamy.RunRecord

binarize = _bellamy.binarize
debinarize = _bellamy.debinarize
binarizer_capacity = _bellamy.binarizer_capacity
hash_text = _bellamy.hash_text
fnv1a64 = _bellamy.fnv1a64
encode_property = _bellamy.encode_property
scaleout_features = _bellamy.scaleout_features
nnls = _bellamy.nnls
ernest_fit = _bellamy.ernest_fit
ernest_predict = _bellamy.ernest_predict
bell_fit = _bellamy.bell_fit
synthetic_runs = _bellamy.synthetic_runs
load_dataset = _bellamy.load_dataset
pretrain = _bellamy.pretrain
finetune = _bellamy.finetune
ecdf = _bellamy.ecdf
lr_at = _bellamy.lr_at

__all__ = [name for name in dir() if not name.startswith("_")]
