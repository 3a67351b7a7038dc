import logging

import pytest

from dryfric import cli


@pytest.fixture(autouse=True)
def _reset_cli_log_handler():
    """Drop the CLI's module-global log handler after each test.

    The handler binds to sys.stderr at creation time; under pytest that is a
    per-test capture stream which is closed once the test ends.
    """
    yield
    handler = cli._handler
    if handler is not None:
        logging.getLogger().removeHandler(handler)
        cli._handler = None
