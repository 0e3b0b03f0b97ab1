from setuptools import setup, find_packages

setup(
    name='coupled-gnn',
    version='1.0',
    packages=find_packages(exclude=['tests']),
    python_requires='>=3.8',
    install_requires=[
        'numpy',
        'pandas',
        'scipy',
        'scikit-learn',
        'threadpoolctl',
        'networkx',
        'gensim',
        'matplotlib'
    ],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['coupled-gnn=coupledgnn.cli:main']},
    description='Popularity prediction of information cascades with coupled graph neural networks.'
)
