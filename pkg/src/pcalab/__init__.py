"""pcalab: an executable workbench for oracle computability over
partial combinatory algebras.

Submodules build on each other bottom-up:

- kernel: outcomes, fuel metering, the model protocol, filters
- models: the SK normal-form algebra, its numeric code twin, oracle tables
- terms: term syntax, bracket abstraction, the combinator kit
- oracle: the oracle-application engine and relativized algebras
- funcpca: the algebra of partial functions on a base model
- higher: type-two and type-three functionals, fixpoint stages, trackers
- suites: randomized law checkers
- cli: the command line front end
"""

__version__ = "0.1.0"
