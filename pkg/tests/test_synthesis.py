import random

import pytest

import sys
import os
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from app.errors import EmptyBead, InvalidInput
from app.models.fountain import Droplet, droplet_to_oligo
from app.models.synthesis import (
    BeadManifest, ErrorModel, ReadSet, consensus_reads, sequence_bead, substitute, synthesize
)
from app.utils import XorShift64

SEGMENT_SIZE = 8


def make_oligos(count=20, seed=0):
    rng = random.Random(seed)
    return [
        droplet_to_oligo(Droplet.build(i + 1, 1, bytes(rng.getrandbits(8) for _ in range(SEGMENT_SIZE))))
        for i in range(count)
    ]


def manifest_for(oligos):
    return BeadManifest(K=len(oligos), segment_size=SEGMENT_SIZE, original_length=len(oligos) * SEGMENT_SIZE)


class TestErrorModel:

    def test_rejects_out_of_range_rates(self):
        with pytest.raises(InvalidInput):
            ErrorModel(substitution_rate=1.5)
        with pytest.raises(InvalidInput):
            ErrorModel(oligo_dropout_rate=-0.1)


class TestSubstitute:

    def test_zero_rate_is_identity(self):
        assert substitute('ACGTACGT', 0.0, XorShift64(1)) == 'ACGTACGT'

    def test_full_rate_changes_every_base(self):
        seq = 'ACGT' * 25
        mutated = substitute(seq, 1.0, XorShift64(1))
        assert all(a != b for a, b in zip(seq, mutated))
        assert set(mutated) <= set('ACGT')

    def test_rate_is_roughly_honoured(self):
        seq = 'A' * 100000
        mutated = substitute(seq, 0.01, XorShift64(5))
        changed = sum(1 for b in mutated if b != 'A')
        assert 800 < changed < 1200


class TestSynthesize:
    """Tests for writing oligos into a bead."""

    def test_zero_error_identity(self):
        oligos = make_oligos()
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        assert list(bead.oligos) == oligos
        assert bead.manifest.oligo_count == len(oligos)

    def test_full_dropout(self):
        oligos = make_oligos()
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(oligo_dropout_rate=1.0), 'bead-0')
        assert bead.oligos == ()
        assert bead.manifest.oligo_count == 0

    def test_full_substitution(self):
        oligos = make_oligos()
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(substitution_rate=1.0), 'bead-0')
        for original, stored in zip(oligos, bead.oligos):
            assert all(a != b for a, b in zip(original, stored))

    def test_deterministic_per_bead_id(self):
        oligos = make_oligos()
        model = ErrorModel(substitution_rate=0.05, oligo_dropout_rate=0.2, rng_seed=3)
        a = synthesize(oligos, manifest_for(oligos), model, 'bead-a')
        b = synthesize(oligos, manifest_for(oligos), model, 'bead-a')
        c = synthesize(oligos, manifest_for(oligos), model, 'bead-c')
        assert a == b
        assert a.oligos != c.oligos

    def test_mixed_lengths_rejected(self):
        with pytest.raises(InvalidInput):
            synthesize(['ACGT', 'ACG'], BeadManifest(1, 1, 1), ErrorModel(), 'bead-0')


class TestSequenceBead:
    """Tests for simulated sequencing."""

    def test_coverage_three(self):
        oligos = make_oligos(5)
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        reads = sequence_bead(bead, 3, ErrorModel())
        assert reads.coverage == 3
        assert len(reads.reads) == 15
        for oligo in oligos:
            assert reads.reads.count(oligo) == 3

    def test_coverage_one_equals_bead(self):
        oligos = make_oligos(5)
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        assert sequence_bead(bead, 1, ErrorModel()).reads == list(bead.oligos)

    def test_lower_coverage_is_prefix(self):
        oligos = make_oligos(10)
        model = ErrorModel(substitution_rate=0.02, rng_seed=11)
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        low = sequence_bead(bead, 2, model).reads
        high = sequence_bead(bead, 5, model).reads
        assert high[:len(low)] == low

    def test_empty_bead(self):
        bead = synthesize(make_oligos(3), BeadManifest(3, SEGMENT_SIZE, 24), ErrorModel(oligo_dropout_rate=1.0), 'b')
        with pytest.raises(EmptyBead):
            sequence_bead(bead, 3, ErrorModel())

    def test_coverage_must_be_positive(self):
        oligos = make_oligos(2)
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        with pytest.raises(InvalidInput):
            sequence_bead(bead, 0, ErrorModel())

    def test_noisy_reads_recover_every_oligo(self):
        oligos = make_oligos(50, seed=9)
        bead = synthesize(oligos, manifest_for(oligos), ErrorModel(), 'bead-0')
        reads = sequence_bead(bead, 5, ErrorModel(substitution_rate=0.01, rng_seed=42))
        assert sorted(consensus_reads(reads, SEGMENT_SIZE)) == sorted(oligos)


class TestConsensusReads:
    """Tests for read grouping and majority vote."""

    def test_identical_reads(self):
        oligo = make_oligos(1)[0]
        assert consensus_reads(ReadSet([oligo] * 3, 3), SEGMENT_SIZE) == [oligo]

    def test_corrupted_read_is_outvoted(self):
        oligo = make_oligos(1)[0]
        pos = 40
        corrupted = oligo[:pos] + ('A' if oligo[pos] != 'A' else 'C') + oligo[pos + 1:]
        result = consensus_reads(ReadSet([oligo, corrupted, oligo], 3), SEGMENT_SIZE)
        assert result == [oligo]

    def test_all_reads_fail_crc(self):
        oligo = make_oligos(1)[0]
        pos = 40
        corrupted = oligo[:pos] + ('A' if oligo[pos] != 'A' else 'C') + oligo[pos + 1:]
        assert consensus_reads(ReadSet([corrupted] * 3, 3), SEGMENT_SIZE) == []

    def test_vote_repairs_reads_that_all_fail(self):
        oligo = make_oligos(1)[0]

        def flip(seq, pos):
            return seq[:pos] + ('A' if seq[pos] != 'A' else 'C') + seq[pos + 1:]

        reads = [flip(oligo, 20), flip(oligo, 35), flip(oligo, 50)]
        assert consensus_reads(ReadSet(reads, 3), SEGMENT_SIZE) == [oligo]

    def test_wrong_length_reads_ignored(self):
        oligo = make_oligos(1)[0]
        assert consensus_reads(ReadSet([oligo[:-1], oligo], 2), SEGMENT_SIZE) == [oligo]

    def test_one_result_per_oligo(self):
        oligos = make_oligos(10)
        reads = ReadSet(oligos * 4, 4)
        assert sorted(consensus_reads(reads, SEGMENT_SIZE)) == sorted(oligos)
