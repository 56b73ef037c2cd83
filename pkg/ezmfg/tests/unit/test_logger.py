"""Layer loggers: caller prefixes and level filtering."""
from __future__ import annotations

import logging

import pytest

from ezmfg.common.logger import PACKAGE, setup_logger


@pytest.fixture
def captured():
    logger = setup_logger('test')
    records = []
    handler = logging.Handler()
    handler.emit = records.append
    logger.base_logger.addHandler(handler)
    logger.base_logger.setLevel(logging.INFO)
    yield logger, records
    logger.base_logger.removeHandler(handler)
    logger.base_logger.setLevel(logging.NOTSET)


def test_function_caller_prefix(captured):
    logger, records = captured

    def solve_step():
        logger.info("done")

    solve_step()
    assert records[-1].getMessage() == "[solve_step] done"


def test_class_caller_prefix(captured):
    logger, records = captured

    class Worker:
        def run(self):
            logger.warning("slow block")

    Worker().run()
    assert records[-1].getMessage() == "[Worker] slow block"
    assert records[-1].levelno == logging.WARNING


def test_filtered_levels_are_dropped(captured):
    logger, records = captured
    logger.debug("hidden")
    assert records == []


def test_layers_share_the_package_handlers():
    logger = setup_logger('test')
    assert logger.base_logger.name == f"{PACKAGE}.test"
    assert logger.base_logger.parent is logging.getLogger(PACKAGE)
    assert logging.getLogger(PACKAGE).handlers
    assert logger.base_logger.handlers == []
