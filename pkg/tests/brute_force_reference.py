"""Independent brute-force reference for the three-row worked example.

Written before the package: plain-Python arithmetic only, no imports from
the package under test. The acceptance suite asserts the toolkit matches
these numbers exactly at 4 decimal places.
"""

# (reward, target_propensity, logging_propensity)
THREE_ROW_LOG = [(1.0, 0.8, 0.6), (0.5, 0.7, 0.5), (1.5, 0.9, 0.7)]


def brute_force_ips(rows):
    total = 0.0
    for r, p_t, p_0 in rows:
        total += r * (p_t / p_0)
    return total / len(rows)


def brute_force_snips(rows):
    num = 0.0
    den = 0.0
    for r, p_t, p_0 in rows:
        w = p_t / p_0
        num += w * r
        den += w
    return num / den


if __name__ == "__main__":
    print("IPS  =", round(brute_force_ips(THREE_ROW_LOG), 4))
    print("SNIPS=", round(brute_force_snips(THREE_ROW_LOG), 4))
