import argparse
import configparser

import pytest

import adax
import figures
import harness
from core import ConfigError
from harness import BOUND_SCHEMA, SIMULATION_SCHEMA, read_csv


def _write_config(path, log_file, **overrides):
    values = {
        'debug': '1',
        'log_to_screen': 'False',
        'log_file': str(log_file),
        'show_banner': 'False',
        'horizon_cap': '40000',
        'truth_samples': '100000',
        'float_digits': '17',
        'workers': '1',
        'default_seed': '0',
        'output_dir': str(path.parent),
    }
    values.update(overrides)
    parser = configparser.ConfigParser()
    parser['DEFAULT'] = values
    with open(path, 'w') as configfile:
        parser.write(configfile)
    return str(path)


@pytest.fixture
def config_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(adax, 'CONFIG', dict(adax.CONFIG))
    monkeypatch.setattr(harness, 'FLOAT_FORMAT', harness.FLOAT_FORMAT)
    monkeypatch.delenv('ADAX_SEED', raising=False)
    return _write_config(tmp_path / 'adax.conf', tmp_path / 'adax.log')


class TestParsing:

    def test_sweep(self):
        assert adax.parse_sweep('1000:1000000:4') == [1000, 10000, 100000, 1000000]

    @pytest.mark.parametrize("text", ['1000:10', 'a:b:c', '0:10:3', '100:10:3'])
    def test_bad_sweep(self, text):
        with pytest.raises(ConfigError):
            adax.parse_sweep(text)

    def test_named_sweep(self):
        assert adax.parse_named_sweep('k=10:1000:3') == ('k', [10, 100, 1000])
        with pytest.raises(ConfigError):
            adax.parse_named_sweep('beta=1:2:2')

    def test_schedule(self):
        assert adax.parse_schedule('1.4,0.17') == (1.4, 0.17)
        with pytest.raises(ConfigError):
            adax.parse_schedule('1.4')

    def test_unknown_subcommand_choice(self):
        with pytest.raises(SystemExit):
            adax.parse_args(['figure', '--id', 'nope', '--out', 'x'])


class TestSeed:

    def test_explicit_seed_wins(self, monkeypatch):
        monkeypatch.setenv('ADAX_SEED', '42')
        assert adax.resolve_seed(argparse.Namespace(seed=7)) == 7

    def test_environment_seed(self, monkeypatch):
        monkeypatch.setenv('ADAX_SEED', '42')
        assert adax.resolve_seed(argparse.Namespace(seed=None)) == 42

    def test_bad_environment_seed(self, monkeypatch):
        monkeypatch.setenv('ADAX_SEED', 'forty-two')
        with pytest.raises(ConfigError):
            adax.resolve_seed(argparse.Namespace(seed=None))

    def test_default_seed(self, monkeypatch):
        monkeypatch.delenv('ADAX_SEED', raising=False)
        assert adax.resolve_seed(argparse.Namespace()) == adax.CONFIG['default_seed']


class TestConfigFile:

    def test_missing_file_is_created(self, config_file, tmp_path):
        new_file = tmp_path / 'fresh.conf'
        adax.create_or_load_config(str(new_file))
        parser = configparser.ConfigParser()
        parser.read(new_file)
        assert set(adax.CONFIG) <= set(parser['DEFAULT'])

    def test_values_override_defaults(self, config_file, tmp_path):
        path = _write_config(tmp_path / 'custom.conf', tmp_path / 'x.log', horizon_cap='123', show_banner='no')
        adax.create_or_load_config(path)
        assert adax.CONFIG['horizon_cap'] == 123
        assert adax.CONFIG['show_banner'] is False

    def test_bad_value(self, config_file, tmp_path):
        path = _write_config(tmp_path / 'bad.conf', tmp_path / 'x.log', horizon_cap='lots')
        with pytest.raises(ConfigError):
            adax.create_or_load_config(path)


class TestMain:

    def test_bound_to_csv(self, config_file, tmp_path):
        out = tmp_path / 'split.csv'
        code = adax.main(['--config', config_file, 'bound', '--name', 'split', '--n', '5000', '--k', '100',
                          '--out', str(out)])
        assert code == 0
        rows = read_csv(str(out), BOUND_SCHEMA)
        assert rows[0]['tau'] == pytest.approx(0.287994, abs=1e-5)

    def test_bound_sweep(self, config_file, tmp_path):
        out = tmp_path / 'sweep.csv'
        code = adax.main(['--config', config_file, 'bound', '--name', 'rzcw', '--n', '1000', '--k', '10',
                          '--sweep', 'n=1000:100000:3', '--out', str(out)])
        assert code == 0
        rows = read_csv(str(out), BOUND_SCHEMA)
        assert [r['n'] for r in rows] == [1000, 10000, 100000]
        assert all(r['opt_rho'] > 0 for r in rows)

    def test_float_digits_setting(self, config_file, tmp_path):
        path = _write_config(tmp_path / 'short.conf', tmp_path / 'adax.log', float_digits='6')
        out = tmp_path / 'short.csv'
        assert adax.main(['--config', path, 'bound', '--name', 'split', '--n', '5000', '--k', '100',
                          '--out', str(out)]) == 0
        assert ',0.287994,' in out.read_text().splitlines()[1]

    def test_simulate_is_reproducible(self, config_file, tmp_path):
        outputs = []
        for name in ('a.csv', 'b.csv'):
            out = tmp_path / name
            code = adax.main(['--config', config_file, 'simulate', '--mechanism', 'gaussian', '--n', '200',
                              '--k', '10', '--runs', '2', '--seed', '4', '--out', str(out)])
            assert code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(read_csv(str(tmp_path / 'a.csv'), SIMULATION_SCHEMA)) == 22

    def test_simulate_uses_environment_seed(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setenv('ADAX_SEED', '4')
        out_env = tmp_path / 'env.csv'
        out_flag = tmp_path / 'flag.csv'
        common = ['--mechanism', 'laplace', '--n', '200', '--k', '5']
        assert adax.main(['--config', config_file, 'simulate', *common, '--out', str(out_env)]) == 0
        assert adax.main(['--config', config_file, 'simulate', *common, '--seed', '4', '--out', str(out_flag)]) == 0
        assert out_env.read_bytes() == out_flag.read_bytes()

    def test_configuration_error_exit_code(self, config_file, tmp_path):
        code = adax.main(['--config', config_file, 'simulate', '--mechanism', 'gnc', '--n', '200', '--k', '10',
                          '--out', str(tmp_path / 'x.csv')])
        assert code == 2

    def test_bad_config_file_exit_code(self, config_file, tmp_path):
        path = _write_config(tmp_path / 'bad.conf', tmp_path / 'adax.log', workers='many')
        assert adax.main(['--config', path, 'bound', '--name', 'split', '--n', '10', '--k', '1']) == 2

    def test_io_error_exit_code(self, config_file, tmp_path):
        blocker = tmp_path / 'file.txt'
        blocker.write_text('x')
        code = adax.main(['--config', config_file, 'bound', '--name', 'split', '--n', '5000', '--k', '100',
                          '--out', str(blocker / 'out.csv')])
        assert code == 3

    def test_figure(self, config_file, tmp_path, monkeypatch):
        monkeypatch.setitem(figures.SCALES, 'desk', {**figures.SCALES['desk'], 'n_gnc': [400], 'horizon': 30,
                                                     'runs': 2})
        out_dir = tmp_path / 'fig'
        assert adax.main(['--config', config_file, 'figure', '--id', 'gnc-beta', '--out', str(out_dir)]) == 0
        rows = read_csv(str(out_dir / 'gnc_beta.csv'), {'series': str, 'n': int, 'k_mean': float, 'k_std': float})
        assert [r['series'] for r in rows] == ['beta=0.05', 'beta=0.005']
        metadata = configparser.ConfigParser()
        metadata.read(out_dir / 'metadata.conf')
        assert metadata['figure']['id'] == 'gnc-beta'
        assert metadata['beta=0.005 n=400']['beta'] == '0.005'
