# Generated by Django 5.2.8 on 2026-10-18 10:42

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('label', models.CharField(db_index=True, max_length=255)),
                ('config_hash', models.CharField(db_index=True, max_length=64)),
                ('code_version', models.CharField(max_length=50)),
                ('seed', models.PositiveIntegerField()),
                ('mode', models.CharField(choices=[('mode_balanced', 'Mode-Balanced'), ('pure_grpo', 'Pure GRPO'), ('grpo_uniform', 'GRPO (uniform mask)'), ('sft_only', 'SFT only')], db_index=True, max_length=20)),
                ('sampling', models.CharField(choices=[('curriculum', 'Curriculum'), ('random', 'Random')], max_length=20)),
                ('deterministic', models.BooleanField(default=True)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('aborted', 'Aborted')], db_index=True, default='running', max_length=20)),
                ('manifest', models.JSONField(blank=True, default=dict)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('final_step', models.PositiveIntegerField(default=0)),
                ('diagnostic', models.TextField(blank=True, null=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'db_table': 'experiment_runs',
                'indexes': [models.Index(fields=['config_hash'], name='experiment__config__378906_idx'), models.Index(fields=['mode', 'sampling'], name='experiment__mode_d7807d_idx'), models.Index(fields=['status'], name='experiment__status_9cbf76_idx')],
            },
        ),
        migrations.CreateModel(
            name='MetricsRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('step', models.PositiveIntegerField()),
                ('stage', models.PositiveSmallIntegerField()),
                ('alpha_t', models.FloatField()),
                ('gamma_t', models.FloatField()),
                ('reward_mean', models.FloatField()),
                ('reward_std', models.FloatField()),
                ('entropy', models.FloatField()),
                ('five_acc', models.FloatField()),
                ('two_acc', models.FloatField()),
                ('macro_f1', models.FloatField()),
                ('weighted_f1', models.FloatField()),
                ('pair_acc', models.FloatField(blank=True, null=True)),
                ('ndcg3', models.FloatField(blank=True, null=True)),
                ('longtail_checkpoint_acc', models.FloatField(blank=True, null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='metrics_rows', to='experiments.experimentrun')),
            ],
            options={
                'verbose_name': 'Metrics Row',
                'verbose_name_plural': 'Metrics Rows',
                'db_table': 'metrics_rows',
                'ordering': ['run', 'step'],
                'constraints': [models.UniqueConstraint(fields=('run', 'step'), name='unique_run_step')],
            },
        ),
    ]
