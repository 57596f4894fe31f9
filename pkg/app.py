"""
Command-line front end for the contraction toolkit.

Every command prints one JSON record {"success": true, "config": ..., "result": ...}
on stdout (or writes it to --output); progress goes to stderr through logging.
Failures print {"success": false, "error": message} and exit with 2 for invalid
input, 3 when a budget is exceeded and 1 otherwise.
"""

import csv
import functools
import json
import logging
import math
import sys
import time
from io import StringIO
from pathlib import Path

import click
import numpy as np

import barvinok
import contract_exact
import positive_mc
import roots as roots_mod
import statmech
import tn_core
from errors import BudgetExceededError, NetworkFormatError, TNError
from settings import Settings

logger = logging.getLogger('tnbarvinok')

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3


def configure_logging(level=None):
    level = level or Settings.log_level()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', force=True)


def jsonable(value):
    """Plain JSON types; complex numbers become [re, im] and non-finite floats null."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [jsonable(float(value.real)), jsonable(float(value.imag))]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def run_config():
    """The resolved options of the running command, defaults and seeds included."""
    ctx = click.get_current_context()
    config = {'command': ctx.command_path.split(' ', 1)[-1], **ctx.params}
    config.pop('output', None)
    return config


def emit(result, output=None):
    text = json.dumps(jsonable({'success': True, 'config': run_config(), 'result': result}), indent=2)
    if output:
        Path(output).write_text(text + '\n')
        logger.info(f'Wrote {output}')
    else:
        click.echo(text)


def error_response(exc, exit_code):
    """Standardized JSON error payload, then exit."""
    logger.error(f'{type(exc).__name__}: {exc}')
    click.echo(json.dumps({'success': False, 'error': str(exc)}))
    click.get_current_context().exit(exit_code)


def reports_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except BudgetExceededError as exc:
            error_response(exc, EXIT_BUDGET)
        except (NetworkFormatError, ValueError) as exc:
            error_response(exc, EXIT_USAGE)
        except TNError as exc:
            error_response(exc, EXIT_FAILURE)
    return wrapper


class ComplexType(click.ParamType):
    name = 'complex'

    def convert(self, value, param, ctx):
        if isinstance(value, (int, float, complex)):
            return complex(value)
        try:
            return complex(str(value).replace(' ', ''))
        except ValueError:
            self.fail(f'{value!r} is not a complex number', param, ctx)


COMPLEX = ComplexType()

input_option = click.option('--input', 'input_path', required=True,
                            type=click.Path(exists=True, dir_okay=False), help='Network document (JSON).')
output_option = click.option('--output', '-o', type=click.Path(dir_okay=False), default=None,
                             help='Write the record here instead of stdout.')
order_option = click.option('--order', default='rowmajor', show_default=True,
                            help='rowmajor, colmajor or file:PATH.')


def resolve_order(network, spec):
    """Swallowing order for `network`; colmajor needs the lattice recorded in its metadata."""
    if spec == 'rowmajor':
        return list(range(network.num_vertices))
    if spec == 'colmajor':
        lattice = network.metadata.get('lattice')
        if not lattice:
            raise ValueError('colmajor order needs a lattice network (metadata.lattice)')
        return tn_core.column_major_order(*lattice)
    if spec.startswith('file:'):
        return tn_core.load_order(spec[len('file:'):], network.num_vertices)
    raise ValueError(f'unknown order {spec!r}; use rowmajor, colmajor or file:PATH')


def lattice_dims(L1, L2, n):
    """(L1, L2) from explicit sides or from n alone, which means a 2 x n/2 torus."""
    if L1 and L2:
        return L1, L2
    if n:
        if n % 2 or n < 4:
            raise ValueError(f'n = {n} is not 2 x (even L2)')
        return 2, n // 2
    raise ValueError('give --L1 and --L2, or --n')


def load_means(path, num_vertices):
    """Per-vertex means from a JSON list of numbers or [re, im] pairs."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f'cannot read means from {path}: {exc}') from exc
    if not isinstance(raw, list) or len(raw) != num_vertices:
        raise ValueError(f'means file {path} must list {num_vertices} values')
    means = []
    for v, item in enumerate(raw):
        if isinstance(item, list) and len(item) == 2:
            means.append(complex(item[0], item[1]))
        elif isinstance(item, (int, float)) and not isinstance(item, bool):
            means.append(complex(item))
        else:
            raise ValueError(f'means[{v}]: expected a number or [re, im], got {item!r}')
    return means


def build_family(network, mu, z_end, means='auto'):
    if mu is not None:
        if means != 'auto':
            raise ValueError('give --mu or --means, not both')
        return barvinok.gaussian_reduction(network, mu)
    if means != 'auto':
        path = means[len('file:'):] if means.startswith('file:') else means
        means = load_means(path, network.num_vertices)
        logger.info(f'Loaded {len(means)} vertex means from {path}')
    return barvinok.make_family(network, means=means, z_end=z_end)


@click.group()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='JSON file of option defaults, nested by command.')
@click.option('--verbose', '-v', is_flag=True, help='Log debug detail to stderr.')
@click.pass_context
def cli(ctx, config_path, verbose):
    """Tensor-network contraction toolkit."""
    configure_logging('DEBUG' if verbose else None)
    if config_path:
        ctx.default_map = json.loads(Path(config_path).read_text())
        logger.info(f'Loaded option defaults from {config_path}')


# generate

@cli.command()
@click.option('--L1', 'L1', type=int, required=True)
@click.option('--L2', 'L2', type=int, required=True)
@click.option('--d', 'd', type=int, required=True)
@click.option('--mu', type=COMPLEX, default=None, help='Mean of the Gaussian ensemble.')
@click.option('--z', type=COMPLEX, default=None, help='Shifted ensemble J + z A instead.')
@click.option('--sigma', type=float, default=1.0, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--sample', type=int, default=0, show_default=True)
@output_option
@reports_errors
def generate(L1, L2, d, mu, z, sigma, seed, sample, output):
    """Sample a Gaussian or shifted-Gaussian torus network."""
    if (mu is None) == (z is None):
        raise ValueError('give exactly one of --mu and --z')
    if mu is not None:
        network = tn_core.sample_gaussian_tn(tn_core.GaussianEnsembleSpec(mu, L1, L2, d, seed, sigma), sample)
    else:
        network = tn_core.sample_shifted_gaussian_tn(L1, L2, d, z, seed, sigma, sample)
    if output:
        tn_core.save_tn(network, output)
    else:
        click.echo(tn_core.dumps_network(network), nl=False)


# contract

@cli.group()
def contract():
    """Contract a network file."""


@contract.command('exact')
@input_option
@order_option
@click.option('--method', type=click.Choice(['swallow', 'reference']), default='swallow', show_default=True)
@output_option
@reports_errors
def contract_exact_cmd(input_path, order, method, output):
    network = tn_core.load_tn(input_path)
    plan = contract_exact.plan_swallowing(network, resolve_order(network, order))
    if method == 'reference':
        chi = tn_core.contract_reference(network)
    else:
        chi = contract_exact.swallow_contract(network, plan)
    delta1, delta2 = contract_exact.delta_norms(network, plan)
    logger.info(f'chi = {chi:.12g} by {method}')
    emit({'chi_re': chi.real, 'chi_im': chi.imag, 'delta1': delta1, 'delta2': delta2,
          'peak_cut': plan.peak_cut, 'cut_sizes': plan.cut_sizes, 'method': method}, output)


@contract.command('barvinok')
@input_option
@click.option('--mu', type=COMPLEX, default=None, help='Common mean; z_end becomes 1/mu.')
@click.option('--zend', type=COMPLEX, default=1.0, show_default=True, help='Used with per-vertex means.')
@click.option('--means', default='auto', show_default=True,
              help='auto (entry means) or a JSON file listing one mean per vertex.')
@click.option('--rho', type=float, default=0.25, show_default=True)
@click.option('--m', 'm', type=int, default=None, help='Taylor order.')
@click.option('--eps', type=float, default=None, help='Target precision; picks m when --m is absent.')
@click.option('--embedding', type=click.Choice(['strip', 'disk']), default='strip', show_default=True)
@click.option('--disk-radius', type=float, default=None,
              help='Root-free radius for the disk tail bound; default beta(rho).')
@click.option('--compensated', is_flag=True, help='Sum each Taylor order with math.fsum.')
@click.option('--certify', is_flag=True, help='Check the strip for roots first.')
@click.option('--compare', is_flag=True, help='Report errors against exact swallowing.')
@output_option
@reports_errors
def contract_barvinok_cmd(input_path, mu, zend, means, rho, m, eps, embedding, disk_radius, compensated, certify,
                          compare, output):
    network = tn_core.load_tn(input_path)
    family = build_family(network, mu, zend, means)
    if m is None:
        if eps is None:
            raise ValueError('give --m or --eps')
        m = barvinok.choose_m(network.num_vertices, eps, rho)
    params = barvinok.BarvinokParams(rho, family.z_end, m, eps or 1.0)
    estimate = barvinok.barvinok_estimate(family, params, embedding, disk_radius=disk_radius, compensated=compensated)
    chi = contract_exact.swallow_contract(network) if compare else None
    per_order = []
    for k, value in enumerate(estimate.per_order_estimates):
        row = {'m': k + 1, 'chi_hat_re': value.real, 'chi_hat_im': value.imag}
        if compare:
            row['rel_error'] = abs(value - chi) / abs(chi) if chi != 0 else None
        per_order.append(row)
    result = {
        'chi_hat_re': estimate.chi_hat.real,
        'chi_hat_im': estimate.chi_hat.imag,
        'm': estimate.m,
        'K': estimate.K,
        'beta': estimate.beta,
        'taylor_tail_bound': estimate.taylor_tail_bound,
        'per_order_estimates': per_order,
    }
    if certify:
        certificate = roots_mod.certify_strip(family, rho)
        result['certified'] = certificate.certified
        result['roots_in_strip'] = certificate.count
    if compare:
        result['chi_re'], result['chi_im'] = chi.real, chi.imag
    emit(result, output)


@contract.command('positive-mc')
@input_option
@order_option
@click.option('--eps', type=float, default=0.05, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@output_option
@reports_errors
def contract_positive_mc_cmd(input_path, order, eps, seed, output):
    network = tn_core.load_tn(input_path)
    plan = contract_exact.plan_swallowing(network, resolve_order(network, order))
    estimate = positive_mc.mc_estimate(network, plan, eps, seed)
    emit({'chi_hat': estimate.chi_hat, 'delta1': estimate.delta1, 'K': estimate.trials,
          'successes': estimate.successes, 'seed': estimate.seed, 'certain': estimate.certain}, output)


# statmech

@cli.group('statmech')
def statmech_group():
    """2D Ising oracles."""


@statmech_group.command('kaufman')
@click.option('--L1', 'L1', type=int, required=True)
@click.option('--L2', 'L2', type=int, required=True)
@click.option('--betaJ', 'beta_j', type=float, default=None)
@click.option('--d', 'd', type=int, default=None, help='Use beta J = ln(d)/4 and report the bounds.')
@click.option('--check', is_flag=True, help='Also enumerate all spin configurations.')
@output_option
@reports_errors
def kaufman_cmd(L1, L2, beta_j, d, check, output):
    if beta_j is None:
        if d is None:
            raise ValueError('give --betaJ or --d')
        beta_j = math.log(d) / 4
    log_z = statmech.kaufman_log_partition(L1, L2, beta_j)
    result = {'beta_j': beta_j, 'log_Z': log_z, 'Z': statmech.exp_or_inf(log_z)}
    if d is not None:
        lower, upper = statmech.partition_bounds(L1 * L2, d)
        result['bounds'] = {'lower': lower, 'upper': upper}
    if check:
        result['log_Z_bruteforce'] = statmech.ising_log_bruteforce(statmech.IsingSpec(L1, L2, beta_j))
    emit(result, output)


def parse_sweep(text):
    """'z=start:step:stop', both ends included."""
    name, _, span = text.partition('=')
    if name.strip() != 'z' or span.count(':') != 2:
        raise ValueError(f'sweep must look like z=start:step:stop, got {text!r}')
    start, step, stop = (float(x) for x in span.split(':'))
    if step <= 0 or stop < start:
        raise ValueError(f'empty sweep {text!r}')
    count = int(round((stop - start) / step)) + 1
    return [start + k * step for k in range(count)]


MOMENT_COLUMNS = ['L1', 'L2', 'd', 'z', 'exact', 'ising', 'ratio', 'lower_bound', 'mc_mean', 'mc_stderr', 'mc_samples']


def moment_row(L1, L2, d, z, mc, seed):
    exact = statmech.second_moment_exact(statmech.MomentParams(L1, L2, d, z))
    bounds = statmech.variance_bounds(L1 * L2, d, z, c=L1 * L2 / d, rho=abs(z))
    row = {'L1': L1, 'L2': L2, 'd': d, 'z': z, 'exact': exact.value, 'ising': exact.ising_value,
           'ratio': exact.ratio, 'lower_bound': bounds.lower, 'mc_mean': None, 'mc_stderr': None, 'mc_samples': 0}
    if mc:
        estimate = statmech.second_moment_mc(L1, L2, d, z, mc, seed)
        row.update(mc_mean=estimate.mean, mc_stderr=estimate.stderr, mc_samples=mc)
    return row


@statmech_group.command('moment')
@click.option('--L1', 'L1', type=int, default=None)
@click.option('--L2', 'L2', type=int, default=None)
@click.option('--n', 'n', type=int, default=None, help='Shorthand for a 2 x n/2 torus.')
@click.option('--d', 'd', type=int, required=True)
@click.option('--z', type=float, default=None)
@click.option('--mc', type=int, default=0, help='Also sample this many networks.')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--sweep', default=None, help='z=start:step:stop; writes CSV.')
@output_option
@reports_errors
def moment_cmd(L1, L2, n, d, z, mc, seed, sweep, output):
    L1, L2 = lattice_dims(L1, L2, n)
    if sweep:
        rows = [moment_row(L1, L2, d, zz, mc, seed) for zz in parse_sweep(sweep)]
        write_csv(rows, MOMENT_COLUMNS, output)
        return
    if z is None:
        raise ValueError('give --z or --sweep')
    emit(moment_row(L1, L2, d, z, mc, seed), output)


def write_csv(rows, columns, output=None):
    output_buffer = StringIO()
    output_buffer.write('# ' + json.dumps(jsonable(run_config()), separators=(',', ':')) + '\n')
    writer = csv.writer(output_buffer)
    writer.writerow(columns)
    for row in rows:
        writer.writerow(['' if row[c] is None else row[c] for c in columns])
    if output:
        Path(output).write_text(output_buffer.getvalue())
        logger.info(f'Wrote {len(rows)} rows to {output}')
    else:
        click.echo(output_buffer.getvalue(), nl=False)


# roots

@cli.group('roots')
def roots_group():
    """Root structure of the interpolation polynomial."""


@roots_group.command('analyze')
@input_option
@click.option('--mu', type=COMPLEX, default=None)
@click.option('--zend', type=COMPLEX, default=1.0, show_default=True)
@click.option('--means', default='auto', show_default=True, help='auto or a JSON file of vertex means.')
@click.option('--lambda', 'lam', type=float, default=None)
@click.option('--rho', type=float, default=None, help='Also certify the strip T(1, 2 rho) for G.')
@click.option('--nodes', type=int, default=4096, show_default=True)
@output_option
@reports_errors
def roots_analyze_cmd(input_path, mu, zend, means, lam, rho, nodes, output):
    network = tn_core.load_tn(input_path)
    family = build_family(network, mu, zend, means)
    poly = roots_mod.extract_coefficients(family)
    radii = (lam, 1 - lam) if lam is not None else (1.0,)
    report = roots_mod.analyze(poly, radii, lam, nodes)
    result = {
        'coefficients': poly.coeffs,
        'roots': report.roots,
        'residuals': report.residuals,
        'converged': report.converged,
        'counts': report.counts,
        'jensen_residuals': {r: j.residual for r, j in report.jensen.items()},
        'sector': report.sector,
    }
    if rho is not None:
        certificate = roots_mod.certify_strip(family, rho)
        result['certified'] = certificate.certified
        result['roots_in_strip'] = certificate.count
    emit(result, output)


@roots_group.command('ensemble')
@click.option('--L1', 'L1', type=int, default=None)
@click.option('--L2', 'L2', type=int, default=None)
@click.option('--n', 'n', type=int, default=None)
@click.option('--d', 'd', type=int, required=True)
@click.option('--mu', type=COMPLEX, default=1.0, show_default=True)
@click.option('--sigma', type=float, default=1.0, show_default=True)
@click.option('--samples', type=int, default=200, show_default=True)
@click.option('--lambda', 'lam', type=float, default=1 / 80, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--format', 'fmt', type=click.Choice(['json', 'csv']), default='json', show_default=True)
@output_option
@reports_errors
def roots_ensemble_cmd(L1, L2, n, d, mu, sigma, samples, lam, seed, fmt, output):
    L1, L2 = lattice_dims(L1, L2, n)
    spec = tn_core.GaussianEnsembleSpec(mu, L1, L2, d, seed, sigma)
    stats = roots_mod.root_count_stats(spec, lam, samples)
    if fmt == 'csv':
        rows = [{'sample': k, 'n_small': s, 'n_big': b, 'sector': sec}
                for k, (s, b, sec) in enumerate(zip(stats.small_counts, stats.big_counts, stats.sectors))]
        write_csv(rows, ['sample', 'n_small', 'n_big', 'sector'], output)
        return
    emit({
        'frac_zero_small_disk': stats.frac_zero_small_disk,
        'mean_count_big_disk': stats.mean_count_big_disk,
        'std_count_big_disk': stats.std_count_big_disk,
        'bound_small_disk': stats.bound_small_disk,
        'bound_big_disk': stats.bound_big_disk,
        'samples': stats.samples,
    }, output)


# bench

def timed(label, fn):
    start = time.perf_counter()
    try:
        value = fn()
    except BudgetExceededError as exc:
        logger.info(f'{label}: skipped ({exc})')
        return {'method': label, 'skipped': str(exc)}
    seconds = time.perf_counter() - start
    logger.info(f'{label}: {seconds:.3f}s')
    return {'method': label, 'seconds': seconds, 'value': value}


@cli.command()
@input_option
@order_option
@click.option('--m', 'm', type=int, default=4, show_default=True)
@click.option('--rho', type=float, default=0.25, show_default=True)
@click.option('--eps', type=float, default=0.05, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@output_option
@reports_errors
def bench(input_path, order, m, rho, eps, seed, output):
    """Time every contraction path on one network."""
    network = tn_core.load_tn(input_path)
    plan = contract_exact.plan_swallowing(network, resolve_order(network, order))
    rows = [
        timed('reference', lambda: tn_core.contract_reference(network)),
        timed('swallow', lambda: contract_exact.swallow_contract(network, plan)),
    ]
    family = barvinok.make_family(network)
    params = barvinok.BarvinokParams(rho, family.z_end, m)
    rows.append(timed('barvinok', lambda: barvinok.barvinok_estimate(family, params).chi_hat))
    if network.is_nonnegative():
        rows.append(timed('positive-mc', lambda: positive_mc.mc_estimate(network, plan, eps, seed).chi_hat))
    emit({'timings': rows}, output)


def run(argv=None) -> int:
    """Entry point returning the process exit code."""
    try:
        code = cli.main(args=argv, prog_name='tnbarvinok', standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return EXIT_FAILURE
    return code if isinstance(code, int) else 0


if __name__ == '__main__':
    sys.exit(run())
