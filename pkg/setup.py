from setuptools import setup, find_packages

packages = [x for x in find_packages('.') if x.startswith('dryfric')]

setup(
    name = "dryfric",
    version = "1.0",
    description = ("Langevin dynamics with dry friction: exact laws, propagators and simulation"),
    license = "BSD",
    packages=packages,
    install_requires=['numpy', 'scipy', 'pyzmq', 'msgpack'],
    extras_require={'color': ['colorama'], 'test': ['pytest']},
    entry_points={'console_scripts': ['dryfric=dryfric.cli:main']},
    classifiers=[],
)
