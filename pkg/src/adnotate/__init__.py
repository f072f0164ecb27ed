"""Explanation-augmented annotation platform for sponsored-content detection."""

from .agreement import (
    AgreementReport,
    BiasReport,
    LabelMatrix,
    PairwiseStats,
    ReportBundle,
    absolute_agreement,
    at_most_one_disagreement,
    build_report,
    disclosed_accuracy,
    krippendorff_alpha,
    model_agreement_majority,
    pairwise_agreement,
    relative_diff,
    render_text,
    sponsored_proportion,
)
from .corpus import (
    AnnotationBatch,
    Corpus,
    DatasetSplit,
    DisclosureScan,
    FollowerTier,
    Label,
    Post,
    SplitSpec,
    WeakLabeledPost,
    build_annotation_batch,
    ingest_posts,
    scan_disclosures,
    strip_disclosures,
    temporal_split,
    undersample,
    weak_label,
)
from .detector import (
    EvalReport,
    LogisticRegressionGD,
    NgramTfidfVectorizer,
    Prediction,
    SponsoredContentDetector,
    TokenizerConfig,
    TruthItem,
    evaluate,
    import_predictions,
    macro_f1,
    tokenize,
)
from .explainer import (
    ChatCompletionClient,
    EndpointConfig,
    Explanation,
    ExplanationSource,
    ImpliedLabel,
    PromptRecipe,
    build_prompt,
    default_recipe,
    explain_post,
    local_explain,
    parse_explanation,
)
from .service import (
    AnnotationService,
    Annotator,
    EventStore,
    Expertise,
    Setup,
    SurveyResponse,
    replay_report,
)

__version__ = "0.1.0"
