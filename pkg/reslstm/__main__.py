#!/usr/bin/env python
# -*- coding: utf-8 -*-
# Copyright (C) 2023 Benjamin Thomas Schwertfeger
# Github: https://github.com/btschwertfeger
#

"""Allows ``python -m reslstm``"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
