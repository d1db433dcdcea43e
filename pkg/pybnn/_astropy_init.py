# Licensed under a 3-clause BSD style license - see LICENSE.txt

__all__ = ['__version__', 'test']

try:
    from importlib.metadata import version as _distribution_version
    __version__ = _distribution_version(__package__)
except Exception:
    __version__ = '0.1.dev0'


# set up the test command
def _get_test_runner():
    import os
    from astropy.tests.runner import TestRunner
    return TestRunner(os.path.dirname(__file__))


def test(package=None, test_path=None, args=None, plugins=None,
         verbose=False, pdb=False, coverage=False, **kwargs):
    """
    Run the tests using `py.test <http://pytest.org/latest>`__.

    Parameters
    ----------
    package : str, optional
        The name of a specific subpackage to test. If nothing is specified
        all default tests are run.

    test_path : str, optional
        Specify location to test by path. May be a single file or
        directory.

    args : str, optional
        Additional arguments to be passed to pytest.

    plugins : list, optional
        Plugins to be passed to pytest.

    verbose : bool, optional
        Same as specifying ``'-v'`` in ``args``.

    pdb : bool, optional
        Turn on PDB post-mortem analysis for failing tests.

    coverage : bool, optional
        Generate a test coverage report.

    kwargs
        Any additional keywords are passed on to the astropy test runner.

    """
    test_runner = _get_test_runner()
    return test_runner.run_tests(
        package=package, test_path=test_path, args=args,
        plugins=plugins, verbose=verbose, pdb=pdb,
        coverage=coverage, **kwargs)
