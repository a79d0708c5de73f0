"""Inspect simulated railway tracks for missing components.

:mod:`~trackscan.components`
    Component labels, footage names, the test cases and run manifests.

:mod:`~trackscan.scene`
    Procedural renderer of the track.

:mod:`~trackscan.inspection`
    Control-versus-variable inspection pipeline.

:mod:`~trackscan.network`
    Convolutional classifier, built from :mod:`~trackscan.layers` and
    trained by :mod:`~trackscan.training`.

:mod:`~trackscan.metrics`
    Confusion matrices, threshold sweeps and rubric scores.

:mod:`~trackscan.cli`
    The command-line interface.
"""
