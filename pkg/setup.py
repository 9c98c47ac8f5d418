# -*- coding: utf-8 -*-
import os
import subprocess

from setuptools import Command, find_packages, setup

PACKAGE_NAME_SUFFIX = os.environ.get('PACKAGE_NAME_SUFFIX', None)


class PackageCommand(Command):
    user_options = []

    def initialize_options(self):
        pass

    def finalize_options(self):
        pass

    def run(self):
        subprocess.check_call(['git', 'clean', '-fxd', 'darkwave'])
        self.run_command('sdist')
        self.run_command('bdist_wheel')


def get_package_name(name):
    if not PACKAGE_NAME_SUFFIX:
        return name
    return f'{name}-{PACKAGE_NAME_SUFFIX}'


setup(
    name=get_package_name('django-darkwave'),
    version='1.0',
    packages=find_packages(include=['darkwave', 'darkwave.*']),
    license='Apache2',
    description='A Django app for wavelet and Fourier guided low-light image enhancement.',
    long_description=open('README.md').read(),
    long_description_content_type='text/markdown',
    zip_safe=False,
    include_package_data=True,
    cmdclass={
        'package': PackageCommand,
    },
    entry_points={
        'console_scripts': ['darkwave=darkwave.cli:main'],
    },
    install_requires=[
        'celery~=5.0',
        'Django>=4.2,<5.2',
        'djangorestframework~=3.9',
        'numpy>=1.22,<3',
        'opencv-python-headless>=4.6,<5',
        'torch>=2.0,<3',
    ],
    python_requires='>=3.8, <3.13',
    classifiers=[
        'Development Status :: 4 - Beta',
        'Environment :: Console',
        'Framework :: Django',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License 2.0 (Apache-2.0)',
        'Operating System :: OS Independent',
        'Programming Language :: Python',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12',
        'Topic :: Scientific/Engineering :: Image Processing',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
)
