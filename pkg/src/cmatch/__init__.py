"""Character-level distribution matching for a toy CTC-attention recognizer.

The package trains a small speech-like sequence recognizer on a labeled
source domain, then adapts it to an unlabeled shifted target domain by
self-training on filtered pseudo labels while pulling per-character
encoder feature distributions together with a kernel MMD penalty.
"""

from .adapt import (
    AdaptConfig,
    PseudoLabel,
    PseudoLabelSet,
    adapt,
    adapt_domain_mmd,
    centroid_distances,
    character_centroids,
    corpus_cer,
    decode_corpus,
    filter_pseudo,
    pretrain,
    pseudo_label,
)
from .assign import AssignmentStrategy, assign_labels
from .corpus import (
    DomainCorpus,
    DomainShiftSpec,
    GeneratorSpec,
    Utterance,
    apply_shift,
    generate,
    read_corpus,
    sample_device_shift,
    write_corpus,
)
from .ctc import (
    CharSet,
    FrameLabelAssignment,
    LogProbLattice,
    ctc_forced_align,
    ctc_greedy_predict,
    ctc_loss,
    extend_with_blanks,
)
from .metrics import EditCounts, char_error_rate, levenshtein, word_error_rate
from .mmd import KernelSpec, LabeledFeatureBag, cmatch_loss, kernel_eval, mmd_sq_biased
from .model import (
    Hypothesis,
    JointLossConfig,
    ModelDims,
    ModelParams,
    beam_search,
    compute_lattice,
    encode,
    init_params,
    joint_loss,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
