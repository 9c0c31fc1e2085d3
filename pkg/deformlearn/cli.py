"""
The deformlearn command line.

Every subcommand reads its inputs from, and writes its outputs to, the run
directory given by --out (OUT_DIR):

    annotations/       one annotation JSON per sample
    truth/             ground-truth theta per sample (synthetic runs)
    prior_poses.jsonl  2D poses for the pose prior
    prior.json         trained prior weights
    fitted/            registration output
    regressor.json     trained regressor
    checkpoint/        deform-learn rounds
    refined/           refined theta per sample
"""
import json
import os
import sys

import click
import numpy as np

from deformlearn.config import (config, load_run_config, schema, validate,
                                ConfigError)
from deformlearn.exc import DeformLearnError, ContractViolation
from deformlearn.log import configure_logging, get_logger, \
    log_uncaught_errors
from deformlearn.util.debug import attach_profiler, report_profile
from deformlearn.util.file import mkdirp
log = get_logger()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class Run(object):
    """ Resolved configuration and paths of one invocation. """
    def __init__(self, cfg):
        self.cfg = cfg
        self.out = cfg['OUT_DIR']
        self._template = None

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def output_dir(self, *parts):
        path = self.path(*parts)
        mkdirp(path)
        return path

    @property
    def template(self):
        if self._template is None:
            from deformlearn.models.template import build_template, \
                read_template
            if self.cfg['TEMPLATE_PATH']:
                self._template = read_template(self.cfg['TEMPLATE_PATH'])
            else:
                self._template = build_template(self.cfg['TEMPLATE_RINGS'],
                                                self.cfg['TEMPLATE_SEGMENTS'])
            if self._template.num_keypoints != self.cfg['NUM_KEYPOINTS']:
                raise ContractViolation(
                    'NUM_KEYPOINTS is {} but the template has {} keypoints'
                    .format(self.cfg['NUM_KEYPOINTS'],
                            self._template.num_keypoints))
        return self._template

    def annotations(self, directory=None):
        from deformlearn.formats.annotation import read_annotations
        return read_annotations(directory or self.path('annotations'),
                                self.template)

    def prior_generator(self):
        """ The generator of PRIOR_PATH, or None. """
        if not self.cfg['PRIOR_PATH']:
            return None
        from deformlearn.prior.train import load_prior
        return load_prior(self.cfg['PRIOR_PATH'])[0]


pass_run = click.make_pass_decorator(Run)


@click.group()
@click.option('--config', 'config_path', type=click.Path(),
              help='JSON file of config values.')
@click.option('--seed', type=int, help='Overrides SEED.')
@click.option('--threads', type=int, help='Overrides THREADS.')
@click.option('--out', 'out_dir', type=click.Path(),
              help='Run directory; overrides OUT_DIR.')
@click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
              help='Override any config key; VALUE is parsed as JSON.')
@click.option('--profile', is_flag=True,
              help='Print a pyinstrument profile when done.')
@click.pass_context
def cli(ctx, config_path, seed, threads, out_dir, overrides, profile):
    """ Deform-and-learn body shape and pose fitting. """
    extra = {}
    if seed is not None:
        extra['SEED'] = seed
    if threads is not None:
        extra['THREADS'] = threads
    if out_dir is not None:
        extra['OUT_DIR'] = out_dir
    run_cfg = load_run_config(config_path, list(overrides))
    run_cfg.update(validate(extra))
    # Library defaults read the module config; it is restored on exit.
    previous = dict(config)
    config.update(run_cfg)
    ctx.call_on_close(lambda: (config.clear(), config.update(previous)))
    configure_logging(level=run_cfg['LOGLEVEL'])
    if profile:
        profiler = attach_profiler()
        ctx.call_on_close(lambda: report_profile(profiler))
    ctx.obj = Run(run_cfg)


@cli.command('show-config')
@click.option('--schema', 'as_schema', is_flag=True,
              help='Print the JSON schema instead of the values.')
@pass_run
def show_config(run, as_schema):
    """ Print the resolved configuration. """
    data = schema() if as_schema else dict(run.cfg)
    click.echo(json.dumps(data, indent=2, sort_keys=True))


@cli.command()
@click.option('--count', type=int, help='Overrides SYNTH_COUNT.')
@click.option('--noise', type=float, help='Overrides SYNTH_PIXEL_NOISE.')
@click.option('--prior-poses', type=int,
              help='Overrides PRIOR_DATASET_SIZE; 0 skips them.')
@pass_run
def synth(run, count, noise, prior_poses):
    """ Write synthetic annotations, their ground truth and 2D poses. """
    from deformlearn.formats.annotation import write_annotations, \
        write_keypoint_sets
    from deformlearn.formats.theta import write_theta_dir
    from deformlearn.synth import synth_dataset, synth_prior_poses
    cfg = run.cfg
    if noise is not None:
        cfg['SYNTH_PIXEL_NOISE'] = noise
    samples, truths = synth_dataset(run.template, count, cfg['SEED'], cfg)
    write_annotations(samples, run.output_dir('annotations'))
    write_theta_dir(truths, run.output_dir('truth'))
    size = cfg['PRIOR_DATASET_SIZE'] if prior_poses is None else prior_poses
    if size:
        keypoints, depths = synth_prior_poses(run.template, size,
                                              cfg['SEED'] + 1, cfg)
        mkdirp(run.out)
        write_keypoint_sets(keypoints, run.path('prior_poses.jsonl'), depths)
    click.echo('wrote {} samples to {}'.format(len(samples), run.out))


@cli.command('train-prior')
@click.option('--poses', type=click.Path(exists=True),
              help='Keypoint JSONL; defaults to prior_poses.jsonl.')
@click.option('--output', type=click.Path(),
              help='Weights file; defaults to prior.json.')
@pass_run
def train_prior_command(run, poses, output):
    """ Train the pose prior on 2D keypoint sets. """
    from deformlearn.formats.annotation import read_keypoint_records
    from deformlearn.prior.skeleton import SkeletonStats
    from deformlearn.prior.train import (depth_sign_accuracy,
                                         evaluate_geometry, new_prior,
                                         prepare_dataset, save_prior,
                                         train_prior)
    cfg = run.cfg
    template = run.template
    records = read_keypoint_records(poses or run.path('prior_poses.jsonl'))
    trunk = template.keypoint_trunk
    data = prepare_dataset([k for k, _ in records], trunk)
    stats = SkeletonStats.from_template(template)
    rng = np.random.default_rng(cfg['SEED'])
    generator, discriminator = new_prior(template.num_keypoints, cfg, rng)
    before = evaluate_geometry(generator, data, stats)
    train_prior(generator, discriminator, data, stats, cfg, rng)
    after = evaluate_geometry(generator, data, stats)
    summary = {'ratio_before': before[0], 'sym_before': before[1],
               'ratio_after': after[0], 'sym_after': after[1]}
    if all(d is not None for _, d in records) and len(records) == len(data):
        summary['depth_sign_accuracy'] = depth_sign_accuracy(
            generator, data, np.stack([d for _, d in records]), trunk[0])
    mkdirp(run.out)
    save_prior(output or run.path('prior.json'), generator, discriminator)
    log.info('trained prior', **summary)
    click.echo(json.dumps(summary, sort_keys=True))


def _with_prior_depths(run, samples):
    generator = run.prior_generator()
    if generator is None:
        return samples
    from deformlearn.learn.loop import fill_gan_depths
    return fill_gan_depths(samples, generator, run.template.keypoint_trunk)


def _initial_thetas(samples, init_dir, template):
    """ One theta per sample from `init_dir`, in sample order. """
    from deformlearn.formats.theta import read_theta_dir
    thetas = read_theta_dir(init_dir, template.num_joints)
    missing = [s.sample_id for s in samples if s.sample_id not in thetas]
    if missing:
        raise ContractViolation('no initial theta for {}'.format(missing[:5]))
    return [thetas[s.sample_id] for s in samples]


@cli.command()
@click.option('--annotations', type=click.Path(exists=True),
              help='Annotation directory; defaults to annotations/.')
@click.option('--init', 'init_dir', type=click.Path(exists=True),
              help='Initial theta per sample; T-pose without it.')
@click.option('--stiff/--no-stiff', default=None,
              help='Force the stiff (first round) weights on or off.')
@click.option('--iterations', type=int)
@pass_run
def register(run, annotations, init_dir, stiff, iterations):
    """ Fit theta to every annotated sample. """
    from deformlearn.formats.theta import write_theta_dir
    from deformlearn.registration.register import RegistConfig, \
        register as register_samples
    cfg = run.cfg
    template = run.template
    samples = _with_prior_depths(run, run.annotations(annotations))
    init = None
    first = init_dir is None
    if init_dir is not None:
        init = _initial_thetas(samples, init_dir, template)
    rc = RegistConfig.from_config(cfg, first_round=first,
                                  iterations=iterations)
    if stiff is not None:
        rc.stiff = stiff
    results = register_samples(samples, init, template, rc)
    write_theta_dir({r.sample_id: r.params for r in results},
                    run.output_dir('fitted'))
    aborted = [r.sample_id for r in results if r.aborted]
    click.echo('registered {} samples ({} aborted)'.format(len(results),
                                                           len(aborted)))


@cli.command('train-regressor')
@click.option('--annotations', type=click.Path(exists=True))
@click.option('--theta', 'theta_dir', type=click.Path(exists=True),
              help='theta_anno per sample; defaults to fitted/.')
@pass_run
def train_regressor_command(run, annotations, theta_dir):
    """ Train the regressor on registration output. """
    from deformlearn.formats.theta import read_theta_dir
    from deformlearn.learn.regressor import (ConvWeights, Regressor,
                                             train_regressor)
    cfg = run.cfg
    template = run.template
    samples = run.annotations(annotations)
    weights = ConvWeights.from_config(cfg)
    theta_anno = {}
    if weights.alpha > 0:
        theta_anno = read_theta_dir(theta_dir or run.path('fitted'),
                                    template.num_joints)
    rng = np.random.default_rng(cfg['SEED'])
    regressor = Regressor.create(template, cfg, rng)
    result = train_regressor(regressor, samples, theta_anno, template, cfg,
                             weights, rng)
    mkdirp(run.out)
    regressor.save(run.path('regressor.json'))
    final = result.history[-1]['total'] if result.history else None
    click.echo('trained regressor, final loss {}'.format(final))


@cli.command('deform-learn')
@click.option('--annotations', type=click.Path(exists=True))
@click.option('--truth', 'truth_dir', type=click.Path(exists=True),
              help='Ground-truth theta; enables the MPJPE history.')
@click.option('--resume/--no-resume', default=True,
              help='Continue from checkpoint/ if present.')
@pass_run
def deform_learn(run, annotations, truth_dir, resume):
    """ Alternate registration and regressor training. """
    from deformlearn.formats.theta import read_theta_dir
    from deformlearn.learn.checkpoint import STATE_FILE, load_checkpoint
    from deformlearn.learn.loop import deform_learn_loop
    template = run.template
    samples = run.annotations(annotations)
    truth_dir = truth_dir or (run.path('truth')
                              if os.path.isdir(run.path('truth')) else None)
    ground_truth = read_theta_dir(truth_dir, template.num_joints) \
        if truth_dir else None
    checkpoint = run.path('checkpoint')
    state = None
    if resume and os.path.isfile(os.path.join(checkpoint, STATE_FILE)):
        state = load_checkpoint(checkpoint, template.num_joints)
        log.info('resuming deform-learn', round=state.round_index)
    state = deform_learn_loop(samples, template, run.cfg, ground_truth,
                              state, checkpoint, run.prior_generator())
    state.regressor.save(run.path('regressor.json'))
    for row in state.history:
        click.echo(json.dumps(row, sort_keys=True))


@cli.command()
@click.option('--annotations', type=click.Path(exists=True))
@click.option('--regressor', 'regressor_path', type=click.Path(exists=True),
              help='Defaults to regressor.json.')
@click.option('--init', 'init_dir', type=click.Path(exists=True),
              help='Start from these theta files instead of the regressor.')
@click.option('--iterations', type=int,
              help='Overrides REFINE_ITERATIONS.')
@pass_run
def refine(run, annotations, regressor_path, init_dir, iterations):
    """ Refine regressor predictions by registration. """
    from deformlearn.formats.theta import write_theta_dir
    from deformlearn.learn.loop import refine as refine_sample
    from deformlearn.learn.regressor import Regressor
    template = run.template
    samples = _with_prior_depths(run, run.annotations(annotations))
    if init_dir is not None:
        init = _initial_thetas(samples, init_dir, template)
    else:
        regressor = Regressor.load(regressor_path or
                                   run.path('regressor.json'))
        init = regressor.predict(samples, template)
    refined = {}
    for sample, theta in zip(samples, init):
        result = refine_sample(theta, sample, template, run.cfg, iterations)
        refined[sample.sample_id] = result.params
    write_theta_dir(refined, run.output_dir('refined'))
    click.echo('refined {} samples'.format(len(refined)))


@cli.command('eval')
@click.option('--pred', 'pred_dir', type=click.Path(exists=True),
              help='Predicted theta; defaults to refined/.')
@click.option('--truth', 'truth_dir', type=click.Path(exists=True),
              help='Defaults to truth/.')
@click.option('--annotations', type=click.Path(exists=True),
              help='Per-pixel error over these correspondences.')
@pass_run
def evaluate_command(run, pred_dir, truth_dir, annotations):
    """ MPJPE, per-vertex and per-pixel error of predictions. """
    from deformlearn.formats.theta import read_theta_dir
    from deformlearn.metrics import evaluate
    template = run.template
    predictions = read_theta_dir(pred_dir or run.path('refined'),
                                 template.num_joints)
    truths = read_theta_dir(truth_dir or run.path('truth'),
                            template.num_joints)
    ids = sorted(i for i in predictions if i in truths)
    if not ids:
        raise ContractViolation('no sample has both a prediction and a '
                                'ground truth')
    samples = None
    if annotations is not None:
        by_id = {s.sample_id: s for s in run.annotations(annotations)}
        samples = [by_id[i] for i in ids]
    report = evaluate(template, [predictions[i] for i in ids],
                      [truths[i] for i in ids], samples)
    mkdirp(run.out)
    report.write_csv(run.path('eval.csv'))
    report.write_json(run.path('eval.json'))
    click.echo(json.dumps(report.to_dict(), sort_keys=True))


@cli.command('export-mesh')
@click.argument('theta_path', type=click.Path(exists=True))
@click.argument('obj_path', type=click.Path())
@click.option('--svg', 'svg_path', type=click.Path(),
              help='Also write a 2D overlay of the projected mesh.')
@click.option('--annotation', 'annotation_path',
              type=click.Path(exists=True),
              help='Annotation drawn on the overlay.')
@pass_run
def export_mesh_command(run, theta_path, obj_path, svg_path,
                        annotation_path):
    """ Pose the template with a theta file and write it as OBJ. """
    from deformlearn.formats.annotation import read_annotation
    from deformlearn.formats.mesh import export_mesh, write_overlay
    from deformlearn.formats.theta import read_theta
    from deformlearn.models.body import pose
    from deformlearn.models.camera import project_array
    template = run.template
    _, params = read_theta(theta_path, template.num_joints)
    posed = pose(template, params)
    export_mesh(posed, obj_path, template)
    if svg_path:
        annotation = read_annotation(annotation_path, template) \
            if annotation_path else None
        size = run.cfg['SYNTH_IMAGE_SIZE']
        width = annotation.width if annotation else size
        height = annotation.height if annotation else size
        keypoints = project_array(
            posed.joint_world[template.keypoint_joints], params)
        write_overlay(svg_path, project_array(posed.vertex_world, params),
                      template.faces, width, height, annotation, keypoints)
    click.echo('wrote {}'.format(obj_path))


@cli.command('densepose-convert')
@click.argument('grids', nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option('--max-points', type=int,
              help='Overrides DENSEPOSE_MAX_POINTS.')
@pass_run
def densepose_convert(run, grids, max_points):
    """ Turn per-pixel (part, u, v) grids into annotations. """
    from deformlearn.formats.annotation import write_annotations
    from deformlearn.formats.densepose import read_grid
    annotations = [read_grid(path, run.template, max_points)
                   for path in grids]
    write_annotations(annotations, run.output_dir('annotations'))
    click.echo('converted {} grids'.format(len(annotations)))


def main(argv=None):
    """ Run the CLI; returns 0 on success, 1 for usage or configuration
    errors and 2 for runtime failures. """
    try:
        cli.main(args=argv, prog_name='deformlearn', standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        click.echo('Error: {}'.format(e), err=True)
        return EXIT_USAGE
    except (DeformLearnError, OSError) as e:
        log_uncaught_errors(log, command=argv)
        click.echo('Error: {}'.format(e), err=True)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
