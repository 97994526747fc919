#!/usr/bin/env python3
"""
cbfland Tests Package

Unit, integration and performance tests for the landing simulator.
"""
