import functools
import logging

import click

from src.errors import StressBDError

logger = logging.getLogger(__name__)


def handle_errors(f):
    """Turn library errors into a one-line message and the error's exit code"""
    @functools.wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except StressBDError as exc:
            logger.debug('command %s failed', f.__name__, exc_info=True)
            click.echo(f'✗ {exc}', err=True)
            raise SystemExit(exc.exit_code) from exc
    return decorated_function
