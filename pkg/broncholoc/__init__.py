"""
broncholoc

Online topological localization of a bronchoscope in a generic airway tree:
branching-point detection on grayscale frames, a discrete Bayes filter with
a bronchoscopy transition prior, an offline Viterbi baseline, evaluation and
a synthetic sequence generator.

"""
from .bayes_filter import (FilterState, GatePolicy, LocalizationFilter,
                           Posterior, init_posterior, predict, run_filter,
                           step, top_k, update)
from .branch_detector import (BranchDetection, DetectorParams, LumenInstance,
                              count_lumens, darkest_pixel_mask, detect_branch,
                              label_components)
from .errors import (ConfigError, DecodeError, EvaluationError, FilterError,
                     ImageError, LikelihoodError, LocalizationError,
                     SynthesisError, TreeParseError, TreeValidationError)
from .evaluation import (SequenceResult, confusion_matrix,
                         mean_over_sequences, topk_accuracy)
from .imaging import GrayImage, QuantizedImage, quantize_levels, to_grayscale
from .likelihood import (CentroidModel, LikelihoodVector, load_likelihood_file,
                         normalize, predict_centroid, train_centroids)
from .synthgen import (LumenSpec, SyntheticSequence, generate_sequence,
                       render_frame)
from .tree_model import (TransitionModel, TreeModel, default_tree, load_tree,
                         node_distance, transition_matrix)
from .viterbi_offline import DecodedPath, viterbi_decode

__version__ = '0.1.0'

__all__ = [
    'TreeModel', 'TransitionModel', 'load_tree', 'default_tree',
    'node_distance', 'transition_matrix',
    'GrayImage', 'QuantizedImage', 'to_grayscale', 'quantize_levels',
    'DetectorParams', 'LumenInstance', 'BranchDetection',
    'darkest_pixel_mask', 'label_components', 'count_lumens',
    'detect_branch',
    'LikelihoodVector', 'normalize', 'load_likelihood_file', 'CentroidModel',
    'train_centroids', 'predict_centroid',
    'Posterior', 'FilterState', 'GatePolicy', 'LocalizationFilter',
    'init_posterior', 'predict', 'update', 'step', 'top_k', 'run_filter',
    'DecodedPath', 'viterbi_decode',
    'SequenceResult', 'topk_accuracy', 'confusion_matrix',
    'mean_over_sequences',
    'LumenSpec', 'SyntheticSequence', 'render_frame', 'generate_sequence',
    'LocalizationError', 'TreeParseError', 'TreeValidationError',
    'ImageError', 'LikelihoodError', 'FilterError', 'DecodeError',
    'EvaluationError', 'SynthesisError', 'ConfigError',
]
