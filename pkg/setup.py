#!/usr/bin/env python
# Licensed under the MIT license - see LICENSE.txt

import glob

from setuptools import find_packages, setup

# Get some values from the setup.cfg
from configparser import ConfigParser

conf = ConfigParser()
conf.read(['setup.cfg'])
metadata = dict(conf.items('metadata'))

PACKAGENAME = metadata.get('package_name', 'pybnn')
DESCRIPTION = metadata.get('description', 'pybnn')
AUTHOR = metadata.get('author', '')
AUTHOR_EMAIL = metadata.get('author_email', '')
LICENSE = metadata.get('license', 'unknown')
URL = metadata.get('url', '')

# order of priority for long_description:
#   (1) set in setup.cfg,
#   (2) load README*
readme_glob = 'README*'
_cfg_long_description = metadata.get('long_description', '')
if _cfg_long_description:
    LONG_DESCRIPTION = _cfg_long_description
elif len(glob.glob(readme_glob)) > 0:
    with open(glob.glob(readme_glob)[0]) as f:
        LONG_DESCRIPTION = f.read()
else:
    LONG_DESCRIPTION = DESCRIPTION

# VERSION should be PEP440 compatible (http://www.python.org/dev/peps/pep-0440)
VERSION = metadata.get('version', '0.0.dev0')

# Define entry points for command-line scripts
entry_points = {'console_scripts': []}

if conf.has_section('entry_points'):
    entry_point_list = conf.items('entry_points')
    for entry_point in entry_point_list:
        entry_points['console_scripts'].append('{0} = {1}'.format(
            entry_point[0], entry_point[1]))

setup(name=PACKAGENAME,
      version=VERSION,
      description=DESCRIPTION,
      install_requires=[s.strip() for s in
                        metadata.get('install_requires', 'numpy').split(',')],
      extras_require={'test': ['pytest>=3.0'],
                      'docs': ['sphinx-astropy']},
      python_requires='>=3.7',
      author=AUTHOR,
      author_email=AUTHOR_EMAIL,
      license=LICENSE,
      url=URL,
      long_description=LONG_DESCRIPTION,
      zip_safe=False,
      packages=find_packages(exclude=['docs']),
      entry_points=entry_points,
)
