import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oidca.claims import ConstraintSet
from oidca.delegation import (
    DelegationChain,
    DelegationStep,
    InMemoryRevocations,
    TrustPolicy,
    append_delegation_step,
    check_scope_reduction,
    enforce_constraints,
    fresh_jti,
    scope_covers,
    sign_step,
    validate_delegation_chain,
)
from oidca.errors import (
    ChronologyError,
    LinkageError,
    MalformedClaim,
    MalformedScope,
    ScopeEscalation,
)
from oidca.keys import generate_signing_key

from .chain_faults import BASE_POLICY, CHAIN_NOW, FAULTS
from .strategies import scope_string


class TestScopeCovers:
    def test_hierarchical_narrowing(self):
        assert scope_covers({"email", "calendar"}, "calendar:view")

    def test_identity(self):
        assert scope_covers({"email"}, "email")

    def test_narrowing_is_one_directional(self):
        assert not scope_covers({"calendar:view"}, "calendar")

    def test_prefix_must_be_segment_aligned(self):
        assert not scope_covers({"cal"}, "calendar")
        assert scope_covers({"cal"}, "cal:endar")


class TestCheckScopeReduction:
    def test_two_step_example(self):
        assert check_scope_reduction("email calendar", "calendar:view") == []

    def test_equality_is_a_subset(self):
        assert check_scope_reduction("email profile calendar", "email profile calendar") == []

    def test_escalation_reported(self):
        assert check_scope_reduction("email", "email admin") == ["admin"]

    def test_malformed_scope(self):
        with pytest.raises(MalformedScope):
            check_scope_reduction("", "email")
        with pytest.raises(MalformedScope):
            check_scope_reduction("email email", "email")

    def test_agrees_with_brute_force_oracle_small(self):
        universe = ["email", "email:read", "calendar", "calendar:view"]

        def oracle_covered(parent_tokens, child):
            return any(child == p or child.startswith(p + ":") for p in parent_tokens)

        subsets = [
            list(c)
            for r in range(1, 3)
            for c in itertools.combinations(universe, r)
        ]
        for parent in subsets:
            for child in subsets:
                expected = [t for t in child if not oracle_covered(parent, t)]
                assert check_scope_reduction(" ".join(parent), " ".join(child)) == expected


class TestValidateChain:
    def test_two_step_fixture_valid(self, two_step_chain_json):
        chain = DelegationChain.from_json(two_step_chain_json)
        report = validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW)
        assert report.verdict == "valid"
        assert report.violations == []
        assert report.rule_results["R1"] == "pass"
        assert report.rule_results["R4"] == "pass"
        assert report.rule_results["R6"] == "not_applicable"

    @pytest.mark.parametrize("rule", sorted(FAULTS))
    def test_single_fault_hits_exactly_one_rule(self, rule, two_step_chain_json):
        chain, policy, now, revocations = FAULTS[rule](two_step_chain_json)
        report = validate_delegation_chain(chain, policy, now, revocations)
        assert report.verdict == "invalid"
        assert report.failed_rules() == {rule}

    def test_all_violations_collected(self, two_step_chain_json):
        # combine the R2 and R4 faults: both must be reported
        mutated = [dict(s) for s in two_step_chain_json]
        mutated[0]["iss"] = "https://rogue.example.com"
        mutated[1]["scope"] = "calendar:view admin"
        chain = DelegationChain.from_json(mutated)
        report = validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW)
        assert report.failed_rules() == {"R2", "R4"}

    def test_root_grant_scopes_checked_for_step_zero(self, two_step_chain_json):
        chain = DelegationChain.from_json(two_step_chain_json)
        policy = TrustPolicy(
            trusted_issuers=BASE_POLICY.trusted_issuers,
            root_grant_scopes=frozenset({"email"}),
        )
        report = validate_delegation_chain(chain, policy, CHAIN_NOW)
        assert report.failed_rules() == {"R4"}
        assert report.violations[0].step_index == 0

    def test_chain_length_boundary(self, two_step_chain_json):
        chain = DelegationChain.from_json(two_step_chain_json)
        ok = TrustPolicy(trusted_issuers=BASE_POLICY.trusted_issuers, max_chain_length=2)
        short = TrustPolicy(trusted_issuers=BASE_POLICY.trusted_issuers, max_chain_length=1)
        assert validate_delegation_chain(chain, ok, CHAIN_NOW).verdict == "valid"
        report = validate_delegation_chain(chain, short, CHAIN_NOW)
        assert report.failed_rules() == {"R7"}

    def test_clock_skew_absorbs_small_reordering(self, two_step_chain_json):
        mutated = [dict(s) for s in two_step_chain_json]
        mutated[1]["delegated_at"] = mutated[0]["delegated_at"] - 5
        chain = DelegationChain.from_json(mutated)
        strict = validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW)
        assert strict.failed_rules() == {"R1"}
        lenient_policy = TrustPolicy(
            trusted_issuers=BASE_POLICY.trusted_issuers, clock_skew_seconds=10
        )
        assert validate_delegation_chain(chain, lenient_policy, CHAIN_NOW).verdict == "valid"

    def test_equal_timestamps_allowed(self, two_step_chain_json):
        mutated = [dict(s) for s in two_step_chain_json]
        mutated[1]["delegated_at"] = mutated[0]["delegated_at"]
        chain = DelegationChain.from_json(mutated)
        assert validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW).verdict == "valid"

    def test_empty_chain_valid(self):
        report = validate_delegation_chain(DelegationChain(), BASE_POLICY, CHAIN_NOW)
        assert report.verdict == "valid"

    def test_valid_step_signature_passes_r6(self, two_step_chain_json):
        signer = generate_signing_key("ES256")
        chain = DelegationChain.from_json(two_step_chain_json)
        chain = DelegationChain(steps=(chain.steps[0], sign_step(chain.steps[1], signer)))
        policy = TrustPolicy(
            trusted_issuers=BASE_POLICY.trusted_issuers,
            step_signature_keys={signer.kid: (signer.alg, signer.public_key)},
        )
        report = validate_delegation_chain(chain, policy, CHAIN_NOW)
        assert report.verdict == "valid"
        assert report.rule_results["R6"] == "pass"


class TestEnforceConstraints:
    def _chain_with(self, constraints, extra_steps=0):
        steps = [
            DelegationStep(
                iss="https://auth.example.com",
                sub="user_456",
                aud="agent_0",
                delegated_at=1714348800,
                scope="email",
                constraints=constraints,
            )
        ]
        for i in range(extra_steps):
            steps.append(
                DelegationStep(
                    iss="https://auth.example.com",
                    sub=f"agent_{i}",
                    aud=f"agent_{i + 1}",
                    delegated_at=1714348800 + i + 1,
                    scope="email",
                )
            )
        return DelegationChain(steps=tuple(steps))

    def test_duration_within_bound(self):
        chain = self._chain_with(ConstraintSet(max_duration_seconds=60))
        assert enforce_constraints(chain.steps[0], 0, chain, now=1714348830) == []

    def test_duration_exceeded(self):
        chain = self._chain_with(ConstraintSet(max_duration_seconds=60))
        violations = enforce_constraints(chain.steps[0], 0, chain, now=1714348900)
        assert len(violations) == 1 and violations[0].rule == "R5"

    def test_zero_depth_forbids_further_hops(self):
        chain = self._chain_with(ConstraintSet(max_delegation_depth=0), extra_steps=1)
        violations = enforce_constraints(chain.steps[0], 0, chain, now=1714348900)
        assert any("max_delegation_depth" in v.detail for v in violations)

    def test_unknown_constraint_mode(self):
        cs = ConstraintSet(other={"geo_fence": "NL"})
        chain = self._chain_with(cs)
        assert enforce_constraints(chain.steps[0], 0, chain, now=0, mode="reject")
        assert enforce_constraints(chain.steps[0], 0, chain, now=0, mode="ignore") == []

    def test_allowed_resources_recorded_not_enforced(self):
        cs = ConstraintSet(allowed_resources=("https://mail.example.com/",))
        chain = self._chain_with(cs)
        assert enforce_constraints(chain.steps[0], 0, chain, now=0) == []
        report = validate_delegation_chain(chain, BASE_POLICY, 0)
        assert report.effective_constraints["allowed_resources"] == [
            {"step_index": 0, "allowed_resources": ["https://mail.example.com/"]}
        ]


class TestAppendDelegationStep:
    def _step(self, sub="agent_instance_789", aud="agent_instance_101", at=1714348830,
              scope="calendar:view", jti=None):
        return DelegationStep(
            iss="https://auth.example.com",
            sub=sub,
            aud=aud,
            delegated_at=at,
            scope=scope,
            jti=jti,
        )

    def test_two_step_fixture_reconstruction(self, two_step_chain_json):
        base = DelegationChain.from_json(two_step_chain_json[:1])
        step = DelegationStep.from_json(two_step_chain_json[1])
        chain = append_delegation_step(base, step, delegator_scope="email calendar")
        assert len(chain) == 2
        assert chain.steps[1].scope == "calendar:view"
        assert chain.steps[1].jti is not None  # assigned on append
        without_jti = {k: v for k, v in chain.steps[1].to_json().items() if k != "jti"}
        assert without_jti == two_step_chain_json[1]

    def test_append_to_empty_chain(self):
        chain = append_delegation_step(DelegationChain(), self._step(sub="user_456"), "calendar")
        assert len(chain) == 1

    def test_scope_escalation_rejected(self, two_step_chain_json):
        base = DelegationChain.from_json(two_step_chain_json[:1])
        step = self._step(scope="email admin")
        with pytest.raises(ScopeEscalation) as excinfo:
            append_delegation_step(base, step, delegator_scope="email")
        assert excinfo.value.violating_tokens == ["admin"]

    def test_linkage_enforced(self, two_step_chain_json):
        base = DelegationChain.from_json(two_step_chain_json[:1])
        with pytest.raises(LinkageError):
            append_delegation_step(base, self._step(sub="stranger"), "email calendar")

    def test_chronology_enforced(self, two_step_chain_json):
        base = DelegationChain.from_json(two_step_chain_json[:1])
        with pytest.raises(ChronologyError):
            append_delegation_step(base, self._step(at=1714348700), "email calendar")

    def test_existing_jti_preserved(self, two_step_chain_json):
        base = DelegationChain.from_json(two_step_chain_json[:1])
        step = self._step(jti="fixed-jti")
        chain = append_delegation_step(base, step, "email calendar")
        assert chain.steps[1].jti == "fixed-jti"


@st.composite
def built_chains(draw):
    """Chains grown exclusively through append_delegation_step with truthful
    delegator scopes."""
    n = draw(st.integers(min_value=1, max_value=4))
    root_scope = draw(scope_string)
    chain = DelegationChain()
    scope = root_scope
    t = draw(st.integers(min_value=0, max_value=2**30))
    parties = [f"party_{i}" for i in range(n + 1)]
    for i in range(n):
        tokens = scope.split()
        keep = draw(st.lists(st.sampled_from(tokens), min_size=1, max_size=len(tokens),
                             unique=True))
        # optionally narrow one kept token hierarchically
        if draw(st.booleans()):
            keep[0] = keep[0] + ":sub"
        child_scope = " ".join(dict.fromkeys(keep))
        t += draw(st.integers(min_value=0, max_value=600))
        step = DelegationStep(
            iss="https://auth.example.com",
            sub=parties[i],
            aud=parties[i + 1],
            delegated_at=t,
            scope=child_scope,
        )
        chain = append_delegation_step(chain, step, delegator_scope=scope)
        scope = child_scope
    return chain, root_scope, t


class TestChainProperties:
    @settings(max_examples=100, deadline=None)
    @given(data=built_chains())
    def test_append_built_chains_always_validate(self, data):
        chain, root_scope, last_t = data
        policy = TrustPolicy(
            trusted_issuers=frozenset({"https://auth.example.com"}),
            max_chain_length=len(chain),
            root_grant_scopes=frozenset(root_scope.split()),
        )
        report = validate_delegation_chain(chain, policy, now=last_t)
        assert report.verdict == "valid", report.to_json()

    @settings(max_examples=100, deadline=None)
    @given(data=built_chains())
    def test_monotone_narrowing(self, data):
        chain, _, _ = data
        for parent, child in zip(chain.steps, chain.steps[1:]):
            for token in child.scope_tokens:
                assert scope_covers(set(parent.scope_tokens), token)

    @settings(max_examples=50, deadline=None)
    @given(data=built_chains())
    def test_length_policy_boundary(self, data):
        chain, root_scope, last_t = data
        issuers = frozenset({"https://auth.example.com"})
        at_limit = TrustPolicy(trusted_issuers=issuers, max_chain_length=len(chain))
        assert validate_delegation_chain(chain, at_limit, last_t).verdict == "valid"
        if len(chain) > 1:
            below = TrustPolicy(trusted_issuers=issuers, max_chain_length=len(chain) - 1)
            report = validate_delegation_chain(chain, below, last_t)
            assert report.failed_rules() == {"R7"}


class TestRevocation:
    def test_revoke_and_check(self):
        revocations = InMemoryRevocations()
        revocations.revoke("step-abc")
        assert revocations.is_revoked("step-abc")
        assert not revocations.is_revoked("never-seen")

    def test_revocation_is_idempotent(self):
        revocations = InMemoryRevocations()
        revocations.revoke("step-abc")
        revocations.revoke("step-abc")
        assert revocations.is_revoked("step-abc")

    def test_revoked_step_fails_r7(self, two_step_chain_json):
        mutated = [dict(s) for s in two_step_chain_json]
        mutated[1]["jti"] = "jti-b"
        chain = DelegationChain.from_json(mutated)
        revocations = InMemoryRevocations()
        assert validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW, revocations).is_valid
        revocations.revoke("jti-b")
        report = validate_delegation_chain(chain, BASE_POLICY, CHAIN_NOW, revocations)
        assert report.failed_rules() == {"R7"}


class TestStepStructure:
    def test_self_delegation_rejected(self):
        with pytest.raises(MalformedClaim):
            DelegationStep(
                iss="https://a", sub="x", aud="x", delegated_at=0, scope="email"
            )

    def test_missing_fields_rejected(self):
        with pytest.raises(MalformedClaim):
            DelegationStep.from_json({"iss": "https://a", "sub": "x"})

    def test_fresh_jti_is_unique_and_urlsafe(self):
        values = {fresh_jti() for _ in range(1000)}
        assert len(values) == 1000
        assert all("=" not in v and "+" not in v and "/" not in v for v in values)
