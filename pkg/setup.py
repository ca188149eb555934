import os.path as osp
from setuptools import setup, find_packages


def readme():
    with open('README.rst') as f:
        content = f.read()
    return content


def find_version():
    version_file = 'guidancelab/__init__.py'
    with open(version_file, 'r') as f:
        for line in f:
            if line.startswith('__version__'):
                return line.split('=')[1].strip().strip('\'"')
    raise RuntimeError('Unable to find __version__ in ' + version_file)


def get_requirements(filename='requirements.txt'):
    here = osp.dirname(osp.realpath(__file__))
    with open(osp.join(here, filename), 'r') as f:
        requires = [line.strip() for line in f.readlines()]
    return [r for r in requires if r and not r.startswith('#')]


setup(
    name='guidancelab',
    version=find_version(),
    description='Learned guidance-scale scheduling on a toy ring world',
    license='MIT',
    long_description=readme(),
    packages=find_packages(exclude=('tests', )),
    py_modules=['main'],
    install_requires=get_requirements(),
    python_requires='>=3.8',
    keywords=['Diffusion', 'Flow Matching', 'Classifier-Free Guidance'],
    entry_points={'console_scripts': ['guidancelab=main:main']}
)
