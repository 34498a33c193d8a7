"""
Services Package
Spectral core, geometry, extension, solvers and the experiment harness
"""
