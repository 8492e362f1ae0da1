class ToolRetrievalError(Exception):
    """Base class for every engine failure; ``code`` is the machine-readable tag."""

    code = "error"


class ConfigurationError(ToolRetrievalError):
    code = "config"


class CatalogError(ToolRetrievalError):
    code = "catalog"


class DatasetError(ToolRetrievalError):
    code = "dataset"


class TextAnalysisError(ToolRetrievalError):
    code = "text"


class EmbeddingError(ToolRetrievalError):
    code = "embedding"


class StaleIndexError(ToolRetrievalError):
    code = "stale_index"


class IndexFormatError(ToolRetrievalError):
    code = "index_format"


class TrainingError(ToolRetrievalError):
    code = "training"


class TemplateError(ToolRetrievalError):
    code = "template"


class ProviderError(ToolRetrievalError):
    code = "provider"


class TranscriptMiss(ProviderError):
    code = "transcript_miss"

    def __init__(self, template_id, key):
        super().__init__(f"no scripted response for template '{template_id}' key {key!r}")
        self.template_id = template_id
        self.key = key


class PlanningError(ToolRetrievalError):
    code = "planning"


class PipelineError(ToolRetrievalError):
    code = "pipeline"


class OptimizationError(ToolRetrievalError):
    code = "optimization"


class EvaluationError(ToolRetrievalError):
    code = "evaluation"


class FixtureError(ToolRetrievalError):
    code = "fixture"
