# Generated by Django 4.2.7 on 2026-10-19 09:12

from django.db import migrations, models
import django.db.models.deletion
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ConvergenceSweep',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('problem', models.CharField(max_length=50)),
                ('method_kind', models.CharField(choices=[('gauss', 'Gauss'), ('hbvm', 'HBVM'), ('shbvm', 'Spectral HBVM')], max_length=20)),
                ('label', models.CharField(max_length=255)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
        ),
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('problem', models.CharField(max_length=50)),
                ('method_kind', models.CharField(choices=[('gauss', 'Gauss'), ('hbvm', 'HBVM'), ('shbvm', 'Spectral HBVM')], max_length=20)),
                ('method_label', models.CharField(max_length=100)),
                ('k', models.IntegerField()),
                ('s', models.IntegerField()),
                ('N', models.IntegerField()),
                ('n_steps', models.IntegerField()),
                ('step_size', models.FloatField()),
                ('e_u', models.FloatField(blank=True, null=True)),
                ('e_H', models.FloatField(blank=True, null=True)),
                ('e_M', models.FloatField(blank=True, null=True)),
                ('e_0', models.FloatField(blank=True, null=True)),
                ('rate_u', models.FloatField(blank=True, null=True)),
                ('rate_H', models.FloatField(blank=True, null=True)),
                ('rate_M', models.FloatField(blank=True, null=True)),
                ('saturated_u', models.BooleanField(default=False)),
                ('saturated_H', models.BooleanField(default=False)),
                ('saturated_M', models.BooleanField(default=False)),
                ('wall_time_seconds', models.FloatField(blank=True, null=True)),
                ('iterations_mean', models.FloatField(blank=True, null=True)),
                ('iterations_max', models.IntegerField(blank=True, null=True)),
                ('selected_s', models.IntegerField(blank=True, null=True)),
                ('selected_k', models.IntegerField(blank=True, null=True)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('failed', 'Failed')], default='completed', max_length=20)),
                ('diagnostics', models.JSONField(blank=True, default=dict)),
                ('config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('sweep', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.CASCADE, related_name='runs', to='experiments.convergencesweep')),
            ],
            options={
                'ordering': ['n_steps', 'created_at'],
            },
        ),
    ]
