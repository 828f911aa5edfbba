import logging
import time

import click

from src.commands import handle_errors
from src.errors import ValidationError
from src.models.networks import NetworkConfig
from src.utils.gradcheck import COMPACT_NETWORK, TOLERANCE, composite_checks, primitive_checks

logger = logging.getLogger(__name__)

FULL_SAMPLE = 8


def run_grad_checks(seed, seeds=20, full=False, corrupt=False):
    """
    Run the primitive and composite checks over ``seeds`` consecutive seeds.

    Returns ``(per_network, per_check, leaks)``: the worst relative error per
    network and per loss path, and the routing violations found.
    """
    per_network = {}
    per_check = {}
    leaks = []
    net_config = NetworkConfig() if full else COMPACT_NETWORK
    for s in range(seed, seed + seeds):
        for name, error in primitive_checks(s).items():
            per_check[name] = max(per_check.get(name, 0.0), error)
            per_network['primitives'] = max(per_network.get('primitives', 0.0), error)
        # the 676-pixel loss is larger, so its finite differences carry more rounding
        results = composite_checks(s, net_config=net_config, corrupt=corrupt,
                                   floor=1e-5 if full else 1e-6,
                                   max_elements=FULL_SAMPLE if full else None)
        for check, result in results.items():
            for network, error in result['errors'].items():
                per_network[network] = max(per_network.get(network, 0.0), error)
                per_check[check] = max(per_check.get(check, 0.0), error)
            leaks.extend(f'seed {s} {check}: {name}' for name in result['leaks'])
    return per_network, per_check, leaks


@click.command('grad-check')
@click.option('--seed', required=True, type=int, help='First seed of the check battery.')
@click.option('--seeds', default=20, show_default=True, type=click.IntRange(min=1),
              help='Number of consecutive seeds to check.')
@click.option('--full', is_flag=True,
              help=f'Check the default network sizes on {FULL_SAMPLE} sampled elements per tensor.')
@click.option('--corrupt-gradient', is_flag=True, hidden=True,
              help='Perturb one analytic gradient (debug: the check must fail).')
@handle_errors
def grad_check_cmd(seed, seeds, full, corrupt_gradient):
    """Compare analytic gradients of every loss path with central differences."""
    start = time.perf_counter()
    per_network, per_check, leaks = run_grad_checks(seed, seeds, full=full, corrupt=corrupt_gradient)
    for network, error in per_network.items():
        click.echo(f'  {network:<10} max rel error {error:.3e}')
    for check, error in per_check.items():
        logger.info('%s max rel error %.3e', check, error)
    for leak in leaks:
        click.echo(f'  leak: {leak}', err=True)

    worst = max(per_network.values(), default=0.0)
    elapsed = time.perf_counter() - start
    if worst >= TOLERANCE or leaks:
        raise ValidationError(
            f'gradient check failed: max rel error {worst:.3e} (tolerance {TOLERANCE:g}), '
            f'{len(leaks)} routing leaks')
    click.echo(f'✓ gradients match over {seeds} seeds (max rel error {worst:.3e}, {elapsed:.1f}s)')
