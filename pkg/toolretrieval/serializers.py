from collections.abc import Mapping

from rest_framework import serializers


class StrictSerializer(serializers.Serializer):
    """Rejects keys that are not declared fields (record formats use exact field names)."""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({"unknown_fields": unknown})
        return super().to_internal_value(data)


def _non_blank(value, label):
    if not value.strip():
        raise serializers.ValidationError(f"{label} may not be empty.")
    return value


# 🔹 Tools file
class HistoryEntrySerializer(StrictSerializer):
    round = serializers.IntegerField(min_value=0)
    text = serializers.CharField(trim_whitespace=False)
    dev_recall = serializers.FloatField(min_value=0.0, max_value=1.0)

    def validate_text(self, value):
        return _non_blank(value, "text")


class ToolRecordSerializer(StrictSerializer):
    id = serializers.CharField(max_length=200)
    name = serializers.CharField(max_length=200)
    category = serializers.CharField(allow_blank=True)
    description = serializers.CharField(trim_whitespace=False)
    # optional lineage, written by save_catalog
    base_description = serializers.CharField(trim_whitespace=False, required=False)
    history = HistoryEntrySerializer(many=True, required=False)

    def validate_description(self, value):
        return _non_blank(value, "description")

    def validate_base_description(self, value):
        return _non_blank(value, "base_description")


# 🔹 Queries file
class QueryRecordSerializer(StrictSerializer):
    id = serializers.CharField(max_length=200)
    query = serializers.CharField(trim_whitespace=False)
    relevant_tool_ids = serializers.ListField(
        child=serializers.CharField(max_length=200), allow_empty=False
    )
    graded = serializers.DictField(
        child=serializers.IntegerField(min_value=0, max_value=2), required=False
    )

    def validate_query(self, value):
        return _non_blank(value, "query")


# 🔹 Description cache (written by optimize, read at inference start)
class CacheEntrySerializer(StrictSerializer):
    description = serializers.CharField(trim_whitespace=False)
    round = serializers.IntegerField(min_value=0)
    dev_recall = serializers.FloatField(min_value=0.0, max_value=1.0)
    history = HistoryEntrySerializer(many=True, required=False)

    def validate_description(self, value):
        return _non_blank(value, "description")


# 🔹 Scripted transcripts
class TranscriptEntrySerializer(StrictSerializer):
    template_id = serializers.ChoiceField(
        choices=["planner", "predictor", "entity_filter", "functionality_assessment", "edit_ground"]
    )
    key = serializers.CharField(trim_whitespace=False)
    response = serializers.CharField(trim_whitespace=False, allow_blank=True)


# 🔹 Engine configuration
class EngineConfigSerializer(serializers.Serializer):
    catalog_path = serializers.CharField(allow_blank=True)
    queries_path = serializers.CharField(allow_blank=True)
    cache_path = serializers.CharField(allow_blank=True)
    transcripts_path = serializers.CharField(allow_blank=True)
    head_path = serializers.CharField(allow_blank=True)
    index_path = serializers.CharField(allow_blank=True)
    output_dir = serializers.CharField(allow_blank=True)

    llm_provider = serializers.ChoiceField(choices=["remote", "scripted"])
    llm_url = serializers.URLField()
    llm_model = serializers.CharField()
    llm_timeout = serializers.FloatField(min_value=0.1)
    llm_temperature = serializers.FloatField(min_value=0.0, max_value=2.0)
    llm_max_tokens = serializers.IntegerField(min_value=1)
    transcript_strict = serializers.BooleanField()
    embedder = serializers.ChoiceField(choices=["remote", "test"])
    embedding_url = serializers.URLField()
    embedding_model = serializers.CharField()
    embedding_dimension = serializers.IntegerField(min_value=8)
    max_inflight = serializers.IntegerField(min_value=1)

    pool_size = serializers.IntegerField(min_value=1)
    rerank_top = serializers.IntegerField(min_value=1)
    max_steps = serializers.IntegerField(min_value=1, max_value=32)
    num_hypotheses = serializers.IntegerField(min_value=1, max_value=16)
    lm_order = serializers.IntegerField(min_value=1, max_value=3)
    include_retrieved = serializers.BooleanField()
    plan_seed = serializers.IntegerField()

    failure_threshold = serializers.FloatField(max_value=1.0)
    max_rounds = serializers.IntegerField(min_value=0)
    failure_batch_cap = serializers.IntegerField(min_value=1)
    full_rebuild = serializers.BooleanField()

    negatives = serializers.IntegerField(min_value=1)
    train_batch_size = serializers.IntegerField(min_value=1)
    learning_rate = serializers.FloatField()
    steps = serializers.IntegerField(min_value=0)
    share_in_batch = serializers.BooleanField()
    train_seed = serializers.IntegerField()

    split_seed = serializers.IntegerField()
    sample_size = serializers.IntegerField(min_value=1)
    eval_seed = serializers.IntegerField()
    workers = serializers.IntegerField(min_value=1)
    debug_checks = serializers.BooleanField()

    def validate_failure_threshold(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("must lie in (0, 1].")
        return value

    def validate_learning_rate(self, value):
        if value <= 0.0:
            raise serializers.ValidationError("must be positive.")
        return value
