# Generated by Django 5.2.7 on 2026-10-18 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='EvaluationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('method', models.CharField(choices=[('pnr', 'Plan-and-Retrieve'), ('dense', 'One-shot dense top-k'), ('bm25', 'One-shot BM25 top-k')], default='pnr', max_length=10)),
                ('split', models.CharField(max_length=10)),
                ('sample_size', models.PositiveIntegerField()),
                ('seed', models.IntegerField()),
                ('catalog_version', models.PositiveIntegerField()),
                ('query_count', models.PositiveIntegerField()),
                ('failed_count', models.PositiveIntegerField(default=0)),
                ('macro_recall', models.FloatField()),
                ('macro_ndcg', models.FloatField()),
                ('report_path', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='Tool',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('tool_id', models.CharField(max_length=200, unique=True)),
                ('name', models.CharField(max_length=200)),
                ('category', models.CharField(blank=True, max_length=200)),
                ('description', models.TextField()),
                ('base_description', models.TextField()),
                ('catalog_version', models.PositiveIntegerField(default=0)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['tool_id'],
            },
        ),
        migrations.CreateModel(
            name='DescriptionRevision',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('position', models.PositiveIntegerField()),
                ('round', models.PositiveIntegerField()),
                ('text', models.TextField()),
                ('dev_recall', models.FloatField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('tool', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='revisions', to='toolretrieval.tool')),
            ],
            options={
                'ordering': ['tool__tool_id', 'position'],
                'unique_together': {('tool', 'position')},
            },
        ),
    ]
