"""Deliberately flawed mechanisms used as negative controls for the audits."""

from fractions import Fraction

from capflp.mechanisms import Outcome


class MeanMechanism:
    """One facility at the average report. Not truthful."""

    free_choice = False

    def __call__(self, reports):
        reports = [Fraction(r) for r in reports]
        return Outcome((sum(reports) / len(reports),), (0,) * len(reports))


class IndexDictator:
    """Facilities at the extreme reports; agent i goes to facility i mod 2.

    The matching depends on input order, so it is not anonymous.
    """

    free_choice = False

    def __call__(self, reports):
        reports = [Fraction(r) for r in reports]
        return Outcome((min(reports), max(reports)), tuple(i % 2 for i in range(len(reports))))
