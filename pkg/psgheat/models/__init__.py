from .mesh import Mesh, GridFunction, ElementField, SparseOperator
from .random_field import TruncatedNormalSpec, SampleDraw
from .heat import BoxConstraint, HeatModelConfig, GradientSample
from .psg import (
    StepSizeRule, Constant, PolyDecay, SqrtDecay, FixedHorizonConstant, PowerDecay,
    BiasSpec, PsgConfig, RunRecord
)
from .analysis import RecursionParams, EfficiencyParams, RateFit, ModelConstants, GrowthConstants
from .experiment import ExperimentConfig, ReferenceSpec

__all__ = [
    'Mesh', 'GridFunction', 'ElementField', 'SparseOperator',
    'TruncatedNormalSpec', 'SampleDraw',
    'BoxConstraint', 'HeatModelConfig', 'GradientSample',
    'StepSizeRule', 'Constant', 'PolyDecay', 'SqrtDecay', 'FixedHorizonConstant', 'PowerDecay',
    'BiasSpec', 'PsgConfig', 'RunRecord',
    'RecursionParams', 'EfficiencyParams', 'RateFit', 'ModelConstants', 'GrowthConstants',
    'ExperimentConfig', 'ReferenceSpec'
]
