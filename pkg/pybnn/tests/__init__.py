# Licensed under a 3-clause BSD style license - see LICENSE.txt
"""
This module contains package tests.
"""
