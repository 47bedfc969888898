"""Command-line interface for acbounds."""

import functools
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click
from colorama import Fore, Style, init

# Configure logfire to suppress warnings unless in verbose mode
os.environ["LOGFIRE_IGNORE_NO_CONFIG"] = "1"

from acbounds.acbounds import (
    EXIT_OK,
    RunOutcome,
    run_kernel_dump,
    run_reproduce_table1,
    run_solve,
)
from acbounds.cache.process import handle_cache_cleanup
from acbounds.config import build_run_config, load_config, load_environment, logfire_token_present
from acbounds.config.read_config import RunConfig
import logfire

init()


class ConsolePrinter:
    """Handles console output for the acbounds CLI."""

    def print_banner(self) -> None:
        banner = r"""
                 __                          __
  ____ _  _____ / /_   ____   __  __ ____   / /____
 / __ `/ / ___// __ \ / __ \ / / / // __ \ / // ___/
/ /_/ / / /__ / /_/ // /_/ // /_/ // / / // /(__  )
\__,_/  \___//_.___/ \____/ \__,_//_/ /_//_//____/
"""
        click.echo(f"{Fore.CYAN}{Style.BRIGHT}{banner}{Style.RESET_ALL}")

    def print_bounds(self, outcome: RunOutcome) -> None:
        if outcome.report is not None:
            report = outcome.report
            click.echo(
                f"{Fore.GREEN}C_opt in [{report.lower:.10f}, {report.upper:.10f}]{Style.RESET_ALL} "
                f"(gap {report.gap:.3e}, lambda* = {report.lambda_star:.6g}, {report.cells} cells)"
            )
        if outcome.fixed_point is not None:
            fixed_point = outcome.fixed_point
            state = "converged" if fixed_point.converged else f"{Fore.YELLOW}not converged{Style.RESET_ALL}"
            click.echo(f"Fixed point: {fixed_point.value:.10f} after {fixed_point.iterations} iterations ({state})")
        click.echo(f"Artifacts written to {Style.BRIGHT}{outcome.out_dir}{Style.RESET_ALL}")


def configure_logging(send_to_logfire: bool, verbose: bool) -> None:
    """Configure logfire; nothing leaves the machine unless asked for and a token is present."""
    if verbose or send_to_logfire:
        load_environment()
        if send_to_logfire and not logfire_token_present():
            click.echo(f"{Fore.YELLOW}--logfire needs LOGFIRE_TOKEN; traces stay local{Style.RESET_ALL}", err=True)
            send_to_logfire = False
        logfire.configure(
            scrubbing=False,
            send_to_logfire=True if send_to_logfire else 'if-token-present',
            console=None if verbose else False,
        )


def _progress_runner(task: Callable[[Callable[[int, int], None]], Any]) -> Any:
    with click.progressbar(
        length=100,
        label=f'{Fore.GREEN}Lambda sweep{Style.RESET_ALL}',
        fill_char='█',
        empty_char='░',
        show_percent=True,
        show_eta=True,
    ) as progress:
        def update_progress(solved: int, total: int) -> None:
            target = round(solved / total * 100) if total else 100
            progress.update(max(0, target - progress.pos))

        return task(update_progress)


def run_options(func: Callable) -> Callable:
    """Flags shared by the run subcommands; each overrides the same key of the config file."""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help='Flat YAML config file'),
        click.option('--weight', type=click.Choice(['box', 'gaussian', 'tabulated']), help='Weight w'),
        click.option('--weight-file', type=click.Path(exists=True, dir_okay=False), help='Samples of a tabulated weight'),
        click.option('--gaussian-exponent', type=float, help='Report bounds for (a/pi)^(1/2) exp(-a x^2) as well'),
        click.option('--mode', type=click.Choice(['ci', 'paper']), help='Resource preset for delta and lambda step'),
        click.option('--delta', type=float, help='Grid step'),
        click.option('--eps-target', type=float, help='Choose delta so the per-lambda error stays below this'),
        click.option('--lambda-step', type=float, help='Spacing of the lambda grid'),
        click.option('--radius', type=float, help='Override the support radius a'),
        click.option('--radius-mode', type=click.Choice(['auto', 'coarse', 'fine']), help='Support radius bound'),
        click.option('--c-lb-prior', type=float, help='Known lower bound on C_opt (0 bootstraps one)'),
        click.option('--refine/--no-refine', default=None, help='Refine the lambda grid around the maximizer'),
        click.option('--k-scan', type=click.Choice(['pruned', 'full']), help='Support-size scan strategy'),
        click.option('--chunk-size', type=int, help='Lambda points per worker task'),
        click.option('--workers', type=int, help='Worker processes (default: available CPUs)'),
        click.option('--fp-tol', type=float, help='Fixed-point stopping tolerance'),
        click.option('--fp-max-iter', type=int, help='Fixed-point iteration cap'),
        click.option('--fp-relaxation', type=float, help='Fixed-point relaxation factor in (0, 1]'),
        click.option('--fp-restarts', type=int, help='Keep the best of this many fixed-point starts'),
        click.option('--out', type=click.Path(file_okay=False), help='Output directory'),
        click.option('--logfire', 'send_to_logfire', is_flag=True, default=None, help='Send traces to logfire'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def cache_options(func: Callable) -> Callable:
    options = [
        click.option('--no-cache', is_flag=True, help='Disable caching'),
        click.option('--resume', help='Resume a previous sweep using its ID'),
        click.option('--no-auto-resume', is_flag=True, help='Disable automatic sweep resumption'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def resolve_config(config_path: Optional[str], flags: Dict[str, Any], **fixed: Any) -> RunConfig:
    """Config file values overridden by the flags that were given."""
    file_values = load_config(config_path) if config_path else {}
    overrides = {key: value for key, value in flags.items() if value is not None}
    if 'send_to_logfire' in overrides:
        overrides['logfire'] = overrides.pop('send_to_logfire')
    overrides.update(fixed)
    return build_run_config(file_values, overrides)


def handle_errors(func: Callable) -> Callable:
    """Print errors in red and exit with code 1."""
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except Exception as e:
            click.echo(f"{Fore.RED}Error: {str(e)}{Style.RESET_ALL}", err=True)
            raise click.Abort()
    return wrapper


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose output')
@click.pass_context
def main(ctx: click.Context, verbose: bool = False) -> None:
    """acbounds: certified bounds for weighted autocorrelation inequalities."""
    ctx.ensure_object(dict)
    ctx.obj['verbose'] = verbose
    ConsolePrinter().print_banner()


def _run(ctx: click.Context, cfg: RunConfig, no_cache: bool, resume: Optional[str], no_auto_resume: bool, command: str) -> None:
    verbose = ctx.obj.get('verbose', False)
    configure_logging(cfg.logfire, verbose)
    if verbose:
        click.echo(f"Running {cfg.method} for the {cfg.weight} weight in {cfg.mode} mode")

    outcome = _progress_runner(lambda progress: run_solve(
        cfg,
        cache_enabled=not no_cache,
        process_id=resume,
        auto_resume=not no_auto_resume,
        progress_callback=progress,
        command=command,
    ))
    ConsolePrinter().print_bounds(outcome)
    if verbose and outcome.process_id:
        click.echo(f"\n{Fore.GREEN}Sweep completed successfully! ID: {Style.BRIGHT}{outcome.process_id}{Style.RESET_ALL}")
    ctx.exit(outcome.exit_code)


@main.command()
@run_options
@click.option('--method', type=click.Choice(['spectral', 'fixedpoint', 'both']), help='Which solver to run')
@cache_options
@click.pass_context
@handle_errors
def solve(ctx: click.Context, config_path: Optional[str], no_cache: bool, resume: Optional[str], no_auto_resume: bool, **flags: Any) -> None:
    """Certified lower and upper bounds on C_opt for one weight."""
    cfg = resolve_config(config_path, flags)
    _run(ctx, cfg, no_cache, resume, no_auto_resume, 'solve')


@main.command('fixed-point')
@run_options
@click.pass_context
@handle_errors
def fixed_point(ctx: click.Context, config_path: Optional[str], **flags: Any) -> None:
    """Lower bound and extremizer candidate from the fixed-point iteration alone."""
    cfg = resolve_config(config_path, flags, method='fixedpoint')
    _run(ctx, cfg, True, None, True, 'fixed-point')


@main.command('kernel-dump')
@run_options
@click.option('--lags', type=int, help='Number of lags (default: cells of the planned grid)')
@click.pass_context
@handle_errors
def kernel_dump(ctx: click.Context, config_path: Optional[str], lags: Optional[int], **flags: Any) -> None:
    """Write the discretized kernel w~(k delta) as a table."""
    cfg = resolve_config(config_path, flags)
    configure_logging(cfg.logfire, ctx.obj.get('verbose', False))
    outcome = run_kernel_dump(cfg, lags)
    click.echo(f"Kernel written to {Style.BRIGHT}{outcome.artifacts[0]}{Style.RESET_ALL}")
    ctx.exit(EXIT_OK)


@main.command('reproduce-table1')
@click.option('--mode', type=click.Choice(['ci', 'paper']), default='paper', show_default=True, help='Resource preset')
@click.option('--workers', type=int, help='Worker processes (default: available CPUs)')
@click.option('--out', type=click.Path(file_okay=False), default='table1', show_default=True, help='Output directory')
@cache_options
@click.pass_context
@handle_errors
def reproduce_table1(
    ctx: click.Context,
    mode: str,
    workers: Optional[int],
    out: str,
    no_cache: bool,
    resume: Optional[str],
    no_auto_resume: bool,
) -> None:
    """Box and Gaussian bounds with both methods, compared with the published values."""
    if resume:
        raise click.UsageError("--resume names a single sweep; use solve for it")
    configure_logging(False, ctx.obj.get('verbose', False))
    table, exit_code = _progress_runner(lambda progress: run_reproduce_table1(
        Path(out),
        mode=mode,
        workers=workers,
        cache_enabled=not no_cache,
        auto_resume=not no_auto_resume,
        progress_callback=progress,
    ))
    click.echo(table.to_string(index=False, float_format=lambda x: f"{x:.7g}"))
    ctx.exit(exit_code)


@main.command('clean-cache')
def clean_cache() -> None:
    """Delete the sweep cache database."""
    handle_cache_cleanup()


if __name__ == '__main__':
    main()
