# -*- coding: utf-8 -*-

from setuptools import setup, find_packages


with open('README.md') as f:
    readme = f.read()

with open('requirements.txt') as f:
    requirements = [line.strip() for line in f if line.strip() and not line.startswith('#')]

setup(
    name='coilct',
    version='0.1.0',
    description='sparse-view CT reconstruction with coordinate-based neural fields that synthesize missing views',
    long_description=readme,
    long_description_content_type='text/markdown',
    author='',
    author_email='',
    license='GPL-3.0',
    python_requires='>=3.8',
    packages=find_packages(exclude=('tests', 'examples*')),
    install_requires=[r for r in requirements if r != 'pytest'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['coilct = coilct.cli:main']},
)
