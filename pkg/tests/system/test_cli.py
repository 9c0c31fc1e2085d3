import json
import logging
import os

import pytest

from deformlearn.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from deformlearn.config import schema

# Small enough that a whole pipeline runs in seconds.
FAST = ['REGIST_ITERATIONS_FIRST=3', 'REGIST_ITERATIONS=2', 'REGIST_LR=0.01',
        'REFINE_ITERATIONS=2', 'REGRESSOR_HIDDEN=8', 'REGRESSOR_LAYERS=2',
        'REGRESSOR_EPOCHS=1', 'DEFORM_LEARN_ROUNDS=1', 'PRIOR_HIDDEN=8',
        'PRIOR_LAYERS=2', 'PRIOR_STEPS=2', 'PRIOR_BATCH_SIZE=8',
        'LOGLEVEL=30']


@pytest.fixture(autouse=True)
def drop_cli_handlers():
    """ The CLI logs to the stdout it saw; don't leave that behind. """
    root = logging.getLogger()
    level = root.level
    yield
    root.setLevel(level)
    for handler in list(root.handlers):
        if getattr(handler, '_deformlearn', False):
            root.removeHandler(handler)


def run(out_dir, *args):
    argv = ['--out', out_dir]
    for item in FAST:
        argv += ['--set', item]
    return main(argv + list(args))


def last_json(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture
def synthetic_run(out_dir):
    assert run(out_dir, 'synth', '--count', '3', '--prior-poses', '16') == \
        EXIT_OK
    return out_dir


def test_show_config(capsys):
    assert main(['--set', 'SEED=7', '--seed', '9', 'show-config']) == EXIT_OK
    values = json.loads(capsys.readouterr().out)
    assert values['SEED'] == 9
    assert values['TEMPLATE_RINGS'] == 4


def test_show_schema(capsys):
    assert main(['show-config', '--schema']) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == schema()


def test_run_leaves_module_config_alone(config):
    seed = config['SEED']
    assert main(['--seed', str(seed + 1), 'show-config']) == EXIT_OK
    assert config['SEED'] == seed


@pytest.mark.parametrize('argv', [
    ['no-such-command'],
    ['--config', '/nonexistent/config.json', 'show-config'],
    ['--set', 'SEED', 'show-config'],
    ['--set', 'SEED="seven"', 'show-config'],
    ['--set', 'NOT_A_KEY=1', 'show-config'],
])
def test_usage_errors(argv):
    assert main(argv) == EXIT_USAGE


def test_config_file(out_dir, capsys):
    path = os.path.join(out_dir, 'run.json')
    with open(path, 'w') as f:
        json.dump({'SEED': 123, 'REGIST_LR': 0.5}, f)
    assert main(['--config', path, '--set', 'SEED=5', 'show-config']) == \
        EXIT_OK
    values = json.loads(capsys.readouterr().out)
    assert values['SEED'] == 5
    assert values['REGIST_LR'] == 0.5


def test_synth_writes_a_run(synthetic_run):
    assert len(os.listdir(os.path.join(synthetic_run, 'annotations'))) == 3
    assert sorted(os.listdir(os.path.join(synthetic_run, 'truth'))) == \
        sorted(os.listdir(os.path.join(synthetic_run, 'annotations')))
    with open(os.path.join(synthetic_run, 'prior_poses.jsonl')) as f:
        assert len(f.readlines()) == 16


def test_register_then_eval(synthetic_run, capsys):
    assert run(synthetic_run, 'register', '--iterations', '4') == EXIT_OK
    fitted = os.path.join(synthetic_run, 'fitted')
    assert len(os.listdir(fitted)) == 3
    capsys.readouterr()
    assert run(synthetic_run, 'eval', '--pred', fitted, '--annotations',
               os.path.join(synthetic_run, 'annotations')) == EXIT_OK
    report = last_json(capsys.readouterr().out)
    assert report['count'] == 3
    assert report['mpjpe_mm'] >= 0.0
    with open(os.path.join(synthetic_run, 'eval.json')) as f:
        assert json.load(f) == report
    assert os.path.isfile(os.path.join(synthetic_run, 'eval.csv'))


def test_register_from_initial_thetas(synthetic_run):
    truth = os.path.join(synthetic_run, 'truth')
    assert run(synthetic_run, 'register', '--init', truth, '--no-stiff',
               '--iterations', '2') == EXIT_OK
    os.remove(os.path.join(truth, sorted(os.listdir(truth))[0]))
    assert run(synthetic_run, 'register', '--init', truth) == EXIT_FAILURE


def test_train_prior(synthetic_run, capsys):
    capsys.readouterr()
    assert run(synthetic_run, 'train-prior') == EXIT_OK
    summary = last_json(capsys.readouterr().out)
    assert 0.0 <= summary['depth_sign_accuracy'] <= 1.0
    assert os.path.isfile(os.path.join(synthetic_run, 'prior.json'))


def test_deform_learn_refine_eval(synthetic_run, capsys):
    assert run(synthetic_run, 'train-prior') == EXIT_OK
    capsys.readouterr()
    prior = 'PRIOR_PATH="{}"'.format(os.path.join(synthetic_run,
                                                  'prior.json'))
    assert run(synthetic_run, '--set', prior, 'deform-learn') == EXIT_OK
    row = last_json(capsys.readouterr().out)
    assert row['round'] == 1
    checkpoint = os.path.join(synthetic_run, 'checkpoint')
    for name in ('state.json', 'regressor.json', 'history.csv', 'round_1'):
        assert os.path.exists(os.path.join(checkpoint, name))
    assert os.path.isfile(os.path.join(synthetic_run, 'regressor.json'))

    # Resuming a finished run trains nothing new.
    assert run(synthetic_run, 'deform-learn') == EXIT_OK

    assert run(synthetic_run, 'refine') == EXIT_OK
    assert len(os.listdir(os.path.join(synthetic_run, 'refined'))) == 3
    assert run(synthetic_run, 'eval') == EXIT_OK


def test_train_regressor(synthetic_run):
    assert run(synthetic_run, 'register', '--iterations', '2') == EXIT_OK
    assert run(synthetic_run, 'train-regressor') == EXIT_OK
    assert os.path.isfile(os.path.join(synthetic_run, 'regressor.json'))


def test_eval_without_predictions(synthetic_run):
    empty = os.path.join(synthetic_run, 'empty')
    os.mkdir(empty)
    assert run(synthetic_run, 'eval', '--pred', empty) == EXIT_FAILURE


def test_export_mesh(synthetic_run):
    truth = os.path.join(synthetic_run, 'truth')
    name = sorted(os.listdir(truth))[0]
    obj_path = os.path.join(synthetic_run, 'body.obj')
    svg_path = os.path.join(synthetic_run, 'body.svg')
    annotation = os.path.join(synthetic_run, 'annotations', name)
    assert run(synthetic_run, 'export-mesh', os.path.join(truth, name),
               obj_path, '--svg', svg_path, '--annotation',
               annotation) == EXIT_OK
    with open(obj_path) as f:
        assert any(line.startswith('f ') for line in f)
    with open(svg_path) as f:
        assert f.read().startswith('<svg')


def test_densepose_convert(out_dir):
    path = os.path.join(out_dir, 'photo.json')
    with open(path, 'w') as f:
        json.dump({'width': 2, 'height': 2,
                   'grid': [[None, [1, 0.5, 0.5]],
                            [[5, 0.2, 0.3], [0, 0, 0]]]},
                  f)
    assert run(out_dir, 'densepose-convert', path) == EXIT_OK
    with open(os.path.join(out_dir, 'annotations', 'photo.json')) as f:
        data = json.load(f)
    assert data['sample_id'] == 'photo'

    with open(path, 'w') as f:
        f.write('{"width": 2')
    assert run(out_dir, 'densepose-convert', path) == EXIT_FAILURE


def test_refine_from_incomplete_thetas(synthetic_run):
    truth = os.path.join(synthetic_run, 'truth')
    assert run(synthetic_run, 'refine', '--init', truth, '--iterations',
               '1') == EXIT_OK
    os.remove(os.path.join(truth, sorted(os.listdir(truth))[0]))
    assert run(synthetic_run, 'refine', '--init', truth) == EXIT_FAILURE


@pytest.mark.parametrize('text', [
    '{"width": 1, "height": 1, "grid": [[[1, NaN, 0.5]]]}',
    '{"width": "abc", "height": 1, "grid": [[[1, 0.5, 0.5]]]}',
    '{"width": 1, "height": 1, "grid": [[[1, "a", 0.5]]]}',
    '{"width": 1, "height": 1, "grid": [[[true, 0.5, 0.5]]]}',
])
def test_densepose_convert_rejects_bad_numbers(out_dir, text):
    path = os.path.join(out_dir, 'photo.json')
    with open(path, 'w') as f:
        f.write(text)
    assert run(out_dir, 'densepose-convert', path) == EXIT_FAILURE


def test_register_rejects_non_finite_annotations(synthetic_run):
    directory = os.path.join(synthetic_run, 'annotations')
    path = os.path.join(directory, sorted(os.listdir(directory))[0])
    with open(path) as f:
        data = json.load(f)
    data['dense'][0][2] = float('nan')
    with open(path, 'w') as f:
        json.dump(data, f)
    assert run(synthetic_run, 'register', '--iterations', '1') == \
        EXIT_FAILURE
