from django.db import models


# 🔹 Catalog mirror (files stay the source of truth; see catalog.py)
class Tool(models.Model):
    tool_id = models.CharField(max_length=200, unique=True)
    name = models.CharField(max_length=200)
    category = models.CharField(max_length=200, blank=True)
    description = models.TextField()
    base_description = models.TextField()
    catalog_version = models.PositiveIntegerField(default=0)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        ordering = ['tool_id']

    def __str__(self):
        return f"{self.tool_id} ({self.name})"

    @property
    def is_optimized(self):
        return self.description != self.base_description


class DescriptionRevision(models.Model):
    tool = models.ForeignKey(Tool, on_delete=models.CASCADE, related_name='revisions')
    position = models.PositiveIntegerField()
    round = models.PositiveIntegerField()
    text = models.TextField()
    dev_recall = models.FloatField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        unique_together = ('tool', 'position')
        ordering = ['tool__tool_id', 'position']

    def __str__(self):
        return f"{self.tool.tool_id} #{self.position} round {self.round} ({self.dev_recall:.3f})"


# 🔹 Evaluation runs
class EvaluationRun(models.Model):
    METHOD_CHOICES = [
        ('pnr', 'Plan-and-Retrieve'),
        ('dense', 'One-shot dense top-k'),
        ('bm25', 'One-shot BM25 top-k'),
    ]

    method = models.CharField(max_length=10, choices=METHOD_CHOICES, default='pnr')
    split = models.CharField(max_length=10)
    sample_size = models.PositiveIntegerField()
    seed = models.IntegerField()
    catalog_version = models.PositiveIntegerField()
    query_count = models.PositiveIntegerField()
    failed_count = models.PositiveIntegerField(default=0)
    macro_recall = models.FloatField()
    macro_ndcg = models.FloatField()
    report_path = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.method} on {self.split}: recall {self.macro_recall:.4f} ndcg {self.macro_ndcg:.4f}"
