import argparse

import pytest

from rvosfuse import (
    ConfigError, FusionConfig, KernelConfig, PipelineConfig, SamplingConfig
)
from rvosfuse.config_types import Count, Fraction, Levels, PathField, Threshold

def test_defaults() -> None:
    """Documented defaults of every section"""
    config = PipelineConfig()
    assert config.fusion.to_dict() == {
        'alpha': 0.1, 'tau_f': 0.5, 'tau_v': 0.3, 'instance_level': True}
    assert config.sampling.mode == 'global'
    assert config.sampling.num_frames == 5
    assert config.prompts.num_positive == 10
    assert config.prompts.num_negative == 5
    assert config.kernel.num_queries == 5
    assert config.kernel.levels == ((8, 8, 16),)
    assert config.kernel.ff_dim == 4*config.kernel.dim
    assert config.seed == 0 and config.jobs == 1
    assert config.predictions is None

@pytest.mark.parametrize('field, value', [
    ('alpha', 1.0),
    ('alpha', -0.1),
    ('tau_f', 0.0),
    ('tau_v', 1.5),
    ('tau_f', 'high'),
    ('instance_level', 'yes'),
])
def test_invalid_fusion_values(field, value) -> None:
    """Out of range and mistyped values raise ConfigError"""
    with pytest.raises(ConfigError):
        FusionConfig(**{field: value})

def test_fields_validate_on_assignment() -> None:
    """Assignments after construction are validated too"""
    config = FusionConfig()
    config.tau_f = 1
    assert config.tau_f == 1.0 and isinstance(config.tau_f, float)
    with pytest.raises(ConfigError):
        config.alpha = 2
    assert config.alpha == 0.1

def test_unknown_keys_name_the_section() -> None:
    """Typos list the valid keys"""
    with pytest.raises(ConfigError, match = r"\[fusion\] 'tua_f'"):
        FusionConfig(tua_f = 0.3)
    with pytest.raises(ConfigError, match = 'tau_v'):
        PipelineConfig.from_dict({'fusion': {'tua_v': 0.3}})

def test_choice_and_count_fields() -> None:
    """Enumerations, integer conversion and lower bounds"""
    assert SamplingConfig(mode = 'local').mode == 'local'
    with pytest.raises(ConfigError):
        SamplingConfig(mode = 'random')
    assert SamplingConfig(num_frames = '7').num_frames == 7
    for value in (0, 2.5, True):
        with pytest.raises(ConfigError):
            SamplingConfig(num_frames = value)
    assert KernelConfig(num_self_layers = 0).num_self_layers == 0

def test_field_types_standalone() -> None:
    """ConfigField subclasses validate outside of a config class"""
    assert Fraction().validate(0, 'alpha') == 0.0
    with pytest.raises(ConfigError):
        Threshold().validate(0, 'tau')
    assert Count().validate(3.0, 'n') == 3
    assert PathField().validate(None, 'out') is None
    assert Levels().validate([[2, 2, 1], (4, 4, 3)], 'levels') == \
        ((2, 2, 1), (4, 4, 3))
    for bad in ([], [(2, 2)], [(2, 0, 1)]):
        with pytest.raises(ConfigError):
            Levels().validate(bad, 'levels')

def test_from_dict_sections() -> None:
    """Top-level fields and section tables"""
    config = PipelineConfig.from_dict({
        'seed': 4,
        'jobs': 2,
        'out': 'results',
        'fusion': {'tau_f': 0.4, 'instance_level': False},
        'kernel': {'dim': 8, 'heads': 2, 'levels': [[4, 4, 3]]},
    })
    assert config.seed == 4 and config.jobs == 2 and config.out == 'results'
    assert config.fusion.tau_f == 0.4 and not config.fusion.instance_level
    assert config.kernel.levels == ((4, 4, 3),)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({'fusion': 0.4})
    with pytest.raises(ConfigError, match = 'heads'):
        PipelineConfig.from_dict({'kernel': {'dim': 8, 'heads': 3}})

def test_from_toml(tmp_path) -> None:
    """TOML files load, missing and broken files are config errors"""
    path = tmp_path / 'pipeline.toml'
    path.write_text(
        'seed = 11\n'
        'predictions = "preds"\n'
        '[fusion]\n'
        'alpha = 0.2\n'
        '[sampling]\n'
        'mode = "local"\n'
    )
    config = PipelineConfig.from_toml(path)
    assert config.seed == 11 and config.predictions == 'preds'
    assert config.fusion.alpha == 0.2 and config.sampling.mode == 'local'
    with pytest.raises(ConfigError, match = 'not found'):
        PipelineConfig.from_toml(tmp_path / 'missing.toml')
    path.write_text('seed = = 3\n')
    with pytest.raises(ConfigError, match = 'not valid TOML'):
        PipelineConfig.from_toml(path)

def test_update_from_args() -> None:
    """Given flags override, None leaves the value alone"""
    config = PipelineConfig.from_dict({'seed': 3, 'fusion': {'tau_v': 0.6}})
    args = argparse.Namespace(**{
        'seed': None, 'jobs': 4, 'fusion.tau_v': None, 'fusion.alpha': 0.05,
        'command': 'fuse'})
    config.update_from_args(args)
    assert config.seed == 3 and config.jobs == 4
    assert config.fusion.tau_v == 0.6 and config.fusion.alpha == 0.05
    with pytest.raises(ConfigError):
        config.update_from_args({'fusion.tau_f': 3.0})
    with pytest.raises(ConfigError):
        config.update_from_args({'kernel.heads': 5})

def test_require() -> None:
    """Missing paths are listed as flags"""
    config = PipelineConfig(predictions = 'p')
    config.require('predictions')
    with pytest.raises(ConfigError, match = '--candidates, --out'):
        config.require('predictions', 'candidates', 'out')

def test_to_dict_roundtrip() -> None:
    """The nested layout rebuilds an equal config"""
    config = PipelineConfig.from_dict({
        'seed': 9, 'fusion': {'tau_f': 0.7}, 'kernel': {'dim': 16}})
    data = config.to_dict()
    assert data['fusion']['tau_f'] == 0.7
    assert data['kernel']['dim'] == 16
    assert PipelineConfig.from_dict(data) == config
    assert 'tau_f=0.7' in repr(config.fusion)
