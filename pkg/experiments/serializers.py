from rest_framework import serializers
from .models import ConvergenceSweep, ExperimentRun
from .services.problems import PROBLEMS


class ExperimentRunSerializer(serializers.ModelSerializer):
    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'problem', 'method_kind', 'method_label', 'k', 's', 'N', 'n_steps', 'step_size',
            'e_u', 'e_H', 'e_M', 'e_0', 'rate_u', 'rate_H', 'rate_M',
            'saturated_u', 'saturated_H', 'saturated_M',
            'wall_time_seconds', 'iterations_mean', 'iterations_max',
            'selected_s', 'selected_k', 'status', 'diagnostics', 'config', 'created_at',
        ]
        read_only_fields = ['id', 'created_at']


class ConvergenceSweepSerializer(serializers.ModelSerializer):
    runs = ExperimentRunSerializer(many=True, read_only=True)

    class Meta:
        model = ConvergenceSweep
        fields = ['id', 'problem', 'method_kind', 'label', 'created_at', 'runs']
        read_only_fields = ['id', 'created_at', 'runs']


class ProblemConfigSerializer(serializers.Serializer):
    name = serializers.ChoiceField(choices=sorted(PROBLEMS))
    A = serializers.FloatField(required=False, min_value=0, help_text="Wave amplitude, 0 < A < 3/2")
    xi0 = serializers.FloatField(required=False, help_text="Solitary wave centre")
    speed_sign = serializers.ChoiceField(choices=[1, -1], required=False,
                                        help_text="Solitary wave direction: 1 moves left, -1 moves right")
    xi1 = serializers.FloatField(required=False, help_text="Left wave centre (collision)")
    xi2 = serializers.FloatField(required=False, help_text="Right wave centre (collision)")
    T = serializers.FloatField(required=False, min_value=0)
    a = serializers.FloatField(required=False)
    b = serializers.FloatField(required=False)

    def validate(self, data):
        allowed = {
            'solitary': {'A', 'xi0', 'speed_sign', 'T', 'a', 'b'},
            'spread': {'A', 'T', 'a', 'b'},
            'collision': {'A', 'xi1', 'xi2', 'T', 'a', 'b'},
        }[data['name']]
        extra = sorted(set(data) - allowed - {'name'})
        if extra:
            raise serializers.ValidationError(f"{data['name']} does not take {', '.join(extra)}")
        if 'A' in data and not 0 < data['A'] < 1.5:
            raise serializers.ValidationError({'A': "Amplitude must satisfy 0 < A < 3/2"})
        if 'T' in data and data['T'] <= 0:
            raise serializers.ValidationError({'T': "Final time must be positive"})
        if 'a' in data and 'b' in data and data['b'] <= data['a']:
            raise serializers.ValidationError("Domain needs b > a")
        return data


class MethodConfigSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=['gauss', 'hbvm', 'shbvm'])
    k = serializers.IntegerField(required=False, min_value=1)
    s = serializers.IntegerField(required=False, min_value=1)
    tol = serializers.FloatField(required=False)
    s_max = serializers.IntegerField(required=False, min_value=2, default=20)

    def validate(self, data):
        kind = data['kind']
        if kind == 'gauss' and 's' not in data:
            raise serializers.ValidationError({'s': "Gauss methods need s"})
        if kind == 'hbvm':
            if 'k' not in data or 's' not in data:
                raise serializers.ValidationError("HBVM needs both k and s")
            if data['k'] < data['s']:
                raise serializers.ValidationError("HBVM needs k >= s")
        if kind == 'shbvm' and not 0 < data.get('tol', 0) < 1:
            raise serializers.ValidationError({'tol': "SHBVM needs a tolerance in (0, 1)"})
        return data


class GridConfigSerializer(serializers.Serializer):
    N = serializers.IntegerField(required=False, min_value=1)


class TimeConfigSerializer(serializers.Serializer):
    n = serializers.IntegerField(min_value=1)


class OutputConfigSerializer(serializers.Serializer):
    dir = serializers.CharField(required=False, max_length=1024)
    stride = serializers.IntegerField(required=False, min_value=1, default=1)
    snapshot_stride = serializers.IntegerField(required=False, min_value=1)


class RunConfigSerializer(serializers.Serializer):
    """Nested form of the flat dotted-key run configuration."""
    problem = ProblemConfigSerializer()
    method = MethodConfigSerializer()
    grid = GridConfigSerializer(required=False)
    time = TimeConfigSerializer()
    output = OutputConfigSerializer(required=False)

    def validate(self, data):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        for group, values in self.initial_data.items():
            if group in self.fields and isinstance(values, dict):
                unknown += sorted(f"{group}.{key}" for key in set(values) - set(self.fields[group].fields))
        if unknown:
            raise serializers.ValidationError(f"Unknown config keys: {', '.join(unknown)}")
        return data
