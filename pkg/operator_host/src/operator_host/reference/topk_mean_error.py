# Deterministic greedy pick: stable sort by mean case error, cycling
# through the ranking when k exceeds the population size.
import numpy as np


def selection(population, k=100, status={}):
    means = np.array([float(np.mean(ind.case_values)) for ind in population])
    order = np.argsort(means, kind="stable")
    ranked = [population[int(i)] for i in order]
    return [ranked[i % len(ranked)] for i in range(k)]
