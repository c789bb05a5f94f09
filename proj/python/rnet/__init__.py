"""CNN feature extractors with softmax and linear SVM classifier heads.

The heavy lifting lives in the compiled ``_core`` extension; arrays are
float64 numpy arrays, images are channel-major (C x H x W).
"""

from ._core import (
    DataError,
    DomainError,
    FormatError,
    Network,
    SoftmaxHead,
    SpecError,
    SvmHead,
    TrainingError,
    accuracy,
    argmax,
    compare,
    confusion_matrix,
    conv_valid_1d,
    conv_valid_2d,
    decode_image,
    default_config,
    format_percent,
    load_dataset,
    max_pool_2d,
    preset_names,
    pretrain,
    relu,
    render_table,
    softmax_probs,
    split_half,
    svm_decision,
    svm_distance,
    svm_margin,
    synthesize_dataset,
    train_binary_svm,
    train_multiclass_svm,
    train_softmax,
    validate_report,
)

__version__ = "0.1.0"


def run(config=None):
    """Pretrain, fine-tune and compare both heads with one config dict.

    Returns the result of :func:`compare` with the pretrained network added
    under ``"pretrained"``.
    """
    net = pretrain(config)
    result = compare(net, config)
    result["pretrained"] = net
    return result


__all__ = [name for name in dir() if not name.startswith("_")]
