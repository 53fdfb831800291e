#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#
# Legacy entry point for setuptools versions without PEP 660 editable
# installs; all metadata lives in pyproject.toml.

import setuptools_scm  # pylint: disable=unused-import
from setuptools import setup

setup()
