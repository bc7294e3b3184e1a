
from setuptools import find_packages, setup

def readme():
    with open('README.md') as f:
        return f.read()

setup(name='pfpt',
      version='0.1.0',
      description='Probabilistic aggregation of federated prompt sets, '
                  'with a simulator for heterogeneous clients',
      long_description=readme(),
      long_description_content_type='text/markdown',
      license='GNU General Public License v3.0',
      packages=find_packages(include=['pfpt', 'pfpt.*']),
      python_requires='>=3.8',
      install_requires=['numpy',
                        'scipy',
                        'scikit-learn',
                        'h5py',
                        'tqdm'],
      extras_require={'tests': ['pytest']},
      entry_points={'console_scripts': ['pfpt=pfpt.cli:main']},
      zip_safe=False)
