from django.db import models
from uuid import uuid4

METHOD_KINDS = [
    ("gauss", "Gauss"),
    ("hbvm", "HBVM"),
    ("shbvm", "Spectral HBVM"),
]


class ConvergenceSweep(models.Model):
    id = models.UUIDField(primary_key=True, default=uuid4, editable=False)
    problem = models.CharField(max_length=50)
    method_kind = models.CharField(max_length=20, choices=METHOD_KINDS)
    label = models.CharField(max_length=255)
    created_at = models.DateTimeField(auto_now_add=True)


class ExperimentRun(models.Model):
    id = models.UUIDField(primary_key=True, default=uuid4, editable=False)
    sweep = models.ForeignKey(ConvergenceSweep, related_name="runs", on_delete=models.CASCADE,
                              null=True, blank=True)
    problem = models.CharField(max_length=50)
    method_kind = models.CharField(max_length=20, choices=METHOD_KINDS)
    method_label = models.CharField(max_length=100)
    k = models.IntegerField()
    s = models.IntegerField()
    N = models.IntegerField()
    n_steps = models.IntegerField()
    step_size = models.FloatField()
    e_u = models.FloatField(null=True, blank=True)
    e_H = models.FloatField(null=True, blank=True)
    e_M = models.FloatField(null=True, blank=True)
    e_0 = models.FloatField(null=True, blank=True)
    # Rates stay empty on the first row of a sweep
    rate_u = models.FloatField(null=True, blank=True)
    rate_H = models.FloatField(null=True, blank=True)
    rate_M = models.FloatField(null=True, blank=True)
    saturated_u = models.BooleanField(default=False)
    saturated_H = models.BooleanField(default=False)
    saturated_M = models.BooleanField(default=False)
    wall_time_seconds = models.FloatField(null=True, blank=True)
    iterations_mean = models.FloatField(null=True, blank=True)
    iterations_max = models.IntegerField(null=True, blank=True)
    selected_s = models.IntegerField(null=True, blank=True)
    selected_k = models.IntegerField(null=True, blank=True)
    status = models.CharField(max_length=20, default="completed", choices=[
        ("completed", "Completed"),
        ("failed", "Failed"),
    ])
    diagnostics = models.JSONField(default=dict, blank=True)
    config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["n_steps", "created_at"]
