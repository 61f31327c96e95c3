from setuptools import setup, find_packages

requirements = [
    'ruamel.yaml>=0.15.71',
    'jsonschema>=3.0.0',
    'numpy>=1.17',
    'sympy>=1.5',
]

setup(
    name='grpolab',
    version='0.1.0',
    description="Group-relative policy optimization at desk scale: objective kernel, "
                "rule-based rewards, verifiers, data curation and a toy trainer",
    packages=find_packages(),
    python_requires=">=3.8",
    install_requires=requirements,
    entry_points={
        'console_scripts': ['grpolab = grpolab.cli:main'],
    },
    keywords='grpo reinforcement-learning reward verifier',
)
