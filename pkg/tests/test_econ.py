"""Economy: ledger discipline, settlement flows, lambda policies, standing
rewards, and the advertiser standing market."""

import numpy as np
import pytest

from plural.econ import (PLATFORM, AdDeal, Advertiser, EconParams, Ledger,
                         PolicyBook, attribute_entry, creator_pool,
                         reward_standing, sell_standing, settle_round)
from plural.errors import (InsufficientFunds, NoAcceptedDeal, NotFound,
                           Unregistered)
from plural.fabric import SocialFabric
from plural.rank import FeedEntry
from plural.score import ContentItem, ScoreCard, ScoreSet


def one_community_world(lambda_c=1.0, balance=100.0, price=1.0):
    f = SocialFabric()
    p = f.add_citizen()
    creator = f.add_citizen()
    c = f.add_community(lambda_=lambda_c)
    f.add_membership(p, c, 1.0, 1.0)
    f.add_membership(creator, c, 1.0, 1.0)
    ledger = Ledger()
    ledger.open_account(("community", c), balance)
    policies = PolicyBook(default_price=price)
    catalog = {0: ContentItem(id=0, creator=creator, target_communities={c})}
    scores = ScoreSet()
    scores.add(ScoreCard(content=0, scope=("community", c), iota=1.0, beta=1.0,
                         delta=0.0, psi=1.0))
    feeds = {p: [FeedEntry(content=0, exposure_share=1.0, rank_position=0)]}
    return f, p, creator, c, ledger, policies, catalog, scores, feeds


class TestLedger:
    def test_post_validations(self):
        ledger = Ledger()
        ledger.open_account(("community", 0), 10.0)
        with pytest.raises(ValueError):
            ledger.post(0, ("community", 0), PLATFORM, 0.0, "PlatformFee")
        with pytest.raises(ValueError):
            ledger.post(0, ("community", 0), ("community", 0), 1.0, "PlatformFee")
        with pytest.raises(ValueError):
            ledger.post(0, ("community", 0), PLATFORM, 1.0, "Tips")
        with pytest.raises(InsufficientFunds):
            ledger.post(0, ("community", 0), PLATFORM, 11.0, "PlatformFee")

    def test_audit_and_csv(self):
        ledger = Ledger()
        ledger.open_account(("community", 0), 5.0)
        ledger.post(2, ("community", 0), PLATFORM, 1.5, "PlatformFee")
        ledger.post(2, ("community", 0), ("citizen", 3), 0.5, "CreatorReward")
        ledger.audit()
        lines = ledger.to_csv().splitlines()
        assert lines[0] == "round,from_kind,from_id,to_kind,to_id,amount,reason"
        assert lines[1] == "2,community,0,platform,0,1.5,PlatformFee"
        assert lines[2] == "2,community,0,citizen,3,0.5,CreatorReward"

    def test_round_totals_balance(self):
        ledger = Ledger()
        ledger.open_account(("community", 0), 5.0)
        ledger.post(0, ("community", 0), PLATFORM, 1.0, "PlatformFee")
        debits, credits = ledger.round_totals(0)
        assert debits == credits == 1.0


class TestSettleRound:
    def test_single_flow_split(self):
        f, p, creator, c, ledger, policies, catalog, scores, feeds = one_community_world()
        events = settle_round(0, feeds, f, catalog, scores, policies, {},
                              EconParams(platform_fee=0.3, creator_share=0.7), ledger)
        assert events == []
        assert ledger.balance(("community", c)) == pytest.approx(99.0)
        assert ledger.balance(PLATFORM) == pytest.approx(0.3)
        assert ledger.balance(("citizen", creator)) == pytest.approx(0.7)
        reasons = [e.reason for e in ledger.entries]
        assert reasons == ["PlatformFee", "CreatorReward"]
        ledger.audit()

    def test_zero_lambda_no_entries(self):
        f, p, creator, c, ledger, policies, catalog, scores, feeds = \
            one_community_world(lambda_c=0.0)
        settle_round(0, feeds, f, catalog, scores, policies, {}, EconParams(), ledger)
        assert ledger.entries == []

    def test_remainder_goes_to_creator_pool(self):
        f, p, creator, c, ledger, policies, catalog, scores, feeds = one_community_world()
        params = EconParams(platform_fee=0.2, creator_share=0.5)
        settle_round(0, feeds, f, catalog, scores, policies, {}, params, ledger)
        assert ledger.balance(PLATFORM) == pytest.approx(0.2)
        assert ledger.balance(("citizen", creator)) == pytest.approx(0.5)
        assert ledger.balance(creator_pool(c)) == pytest.approx(0.3)
        ledger.audit()

    def test_citizen_sponsor_books_subscription(self):
        f = SocialFabric()
        p = f.add_citizen(lambda_=1.0, subscriber=True)
        creator = f.add_citizen()
        c = f.add_community(lambda_=0.0)
        f.add_membership(p, c, 1.0, 1.0)
        f.add_membership(creator, c, 1.0, 1.0)
        ledger = Ledger()
        ledger.open_account(("citizen", p), 10.0)
        catalog = {0: ContentItem(id=0, creator=creator, target_communities={c})}
        scores = ScoreSet()
        scores.add(ScoreCard(content=0, scope=("citizen", p), iota=1.0, beta=0.5,
                             delta=0.0, psi=0.5))
        feeds = {p: [FeedEntry(content=0, exposure_share=1.0, rank_position=0)]}
        settle_round(0, feeds, f, catalog, scores, PolicyBook(default_price=1.0),
                     {}, EconParams(), ledger)
        assert [e.reason for e in ledger.entries] == ["Subscription", "CreatorReward"]
        assert ledger.balance(("citizen", p)) == pytest.approx(9.0)

    def test_nonsubscriber_citizen_never_charged(self):
        f = SocialFabric()
        p = f.add_citizen(lambda_=1.0, subscriber=False)
        creator = f.add_citizen()
        c = f.add_community(lambda_=0.0)
        f.add_membership(p, c, 1.0, 1.0)
        f.add_membership(creator, c, 1.0, 1.0)
        ledger = Ledger()
        catalog = {0: ContentItem(id=0, creator=creator, target_communities={c})}
        scores = ScoreSet()
        scores.add(ScoreCard(content=0, scope=("citizen", p), iota=1.0, beta=0.5,
                             delta=0.0, psi=0.5))
        feeds = {p: [FeedEntry(content=0, exposure_share=1.0, rank_position=0)]}
        settle_round(0, feeds, f, catalog, scores, PolicyBook(default_price=1.0),
                     {}, EconParams(), ledger)
        assert ledger.entries == []

    def test_insufficient_funds_clamps_lambda(self):
        f, p, creator, c, ledger, policies, catalog, scores, feeds = \
            one_community_world(balance=0.4)
        events = settle_round(0, feeds, f, catalog, scores, policies, {},
                              EconParams(), ledger)
        assert any(e["kind"] == "lambda_clamped" and e["owner"] == ("community", c)
                   for e in events)
        assert f.communities[c].lambda_ == 0.0
        assert ledger.balance(("community", c)) == pytest.approx(0.4)
        ledger.audit()  # nothing went negative

    def test_attribution_fractions_sum_to_one(self):
        rng = np.random.default_rng(0)
        f = SocialFabric()
        p = f.add_citizen(lambda_=0.7, subscriber=True)
        c1 = f.add_community(lambda_=1.2)
        c2 = f.add_community(lambda_=0.8)
        f.add_membership(p, c1, 1.0, 1.3)
        f.add_membership(p, c2, 1.0, 0.7)
        scores = ScoreSet()
        for scope in (("citizen", p), ("community", c1), ("community", c2)):
            scores.add(ScoreCard(content=0, scope=scope, iota=1.0,
                                 beta=float(rng.uniform(0.2, 1)), delta=0.0,
                                 psi=float(rng.uniform(0.2, 1))))
        terms = attribute_entry(p, 0, f, scores)
        assert terms, "expected sponsored terms"
        assert sum(frac for _, frac in terms) == pytest.approx(1.0, abs=1e-9)

    def test_zero_sum_random_scenario(self):
        rng = np.random.default_rng(4)
        f = SocialFabric()
        citizens = [f.add_citizen(lambda_=float(rng.uniform(0, 1)),
                                  subscriber=bool(rng.random() < 0.5))
                    for _ in range(6)]
        comms = [f.add_community(lambda_=float(rng.uniform(0, 2))) for _ in range(3)]
        for p in citizens:
            for c in rng.choice(comms, size=int(rng.integers(1, 3)), replace=False):
                f.add_membership(p, int(c), 1.0, float(rng.uniform(0.5, 2)))
        ledger = Ledger()
        for c in comms:
            ledger.open_account(("community", c), 50.0)
        for p in citizens:
            if f.citizens[p].subscriber:
                ledger.open_account(("citizen", p), 20.0)
        catalog = {m: ContentItem(id=m, creator=citizens[m % len(citizens)],
                                  target_communities={int(rng.choice(comms))})
                   for m in range(8)}
        scores = ScoreSet()
        for m in catalog:
            for c in comms:
                scores.add(ScoreCard(content=m, scope=("community", c), iota=1.0,
                                     beta=float(rng.uniform(0, 1)), delta=0.0,
                                     psi=float(rng.uniform(0, 1))))
            for p in citizens:
                scores.add(ScoreCard(content=m, scope=("citizen", p), iota=1.0,
                                     beta=0.5, delta=0.0, psi=float(rng.uniform(0, 1))))
        feeds = {}
        for p in citizens:
            pool = list(catalog)
            shares = rng.dirichlet(np.ones(len(pool)))
            feeds[p] = [FeedEntry(content=m, exposure_share=float(s), rank_position=i)
                        for i, (m, s) in enumerate(zip(pool, shares))]
        settle_round(0, feeds, f, catalog, scores, PolicyBook(default_price=0.5),
                     {}, EconParams(platform_fee=0.25, creator_share=0.6), ledger)
        # oracle: re-sum every entry from scratch
        debits = sum(e.amount for e in ledger.entries)
        credits = sum(e.amount for e in ledger.entries)
        assert debits == pytest.approx(credits, abs=1e-9)
        ledger.audit()
        assert ledger.entries, "expected sponsored flows"

    def test_creator_revenue_monotone_in_psi(self):
        def revenue(psi_value):
            f, p, creator, c, ledger, policies, catalog, scores, feeds = \
                one_community_world()
            scores = ScoreSet()
            scores.add(ScoreCard(content=0, scope=("community", c), iota=1.0,
                                 beta=psi_value, delta=0.0, psi=psi_value))
            other = ContentItem(id=1, creator=p, target_communities={c})
            catalog[1] = other
            scores.add(ScoreCard(content=1, scope=("community", c), iota=1.0,
                                 beta=0.5, delta=0.0, psi=0.5))
            feeds = {p: [FeedEntry(content=0, exposure_share=0.6, rank_position=0),
                         FeedEntry(content=1, exposure_share=0.4, rank_position=1)]}
            settle_round(0, feeds, f, catalog, scores, policies, {}, EconParams(), ledger)
            return ledger.balance(("citizen", creator))

        assert revenue(0.9) >= revenue(0.5) >= revenue(0.2)


class TestAdvertising:
    def _world(self):
        f = SocialFabric()
        p = f.add_citizen(accepts_personal_ads=True)
        c = f.add_community(lambda_=1.0, admin_registered=True)
        f.add_membership(p, c, 1.0, 1.0)
        adv = Advertiser(id=0, budget=10.0,
                         deals=[AdDeal(community=c, price_per_impression=2.0,
                                       accepted=True)],
                         personal_targeting=True, personal_price=0.5)
        ledger = Ledger()
        ledger.open_account(("advertiser", 0), 10.0)
        ledger.open_account(("community", c), 0.0)
        catalog = {0: ContentItem(id=0, creator=0, target_communities={c},
                                  creator_kind="advertiser")}
        feeds = {p: [FeedEntry(content=0, exposure_share=0.5, rank_position=0)]}
        return f, p, c, adv, ledger, catalog, feeds

    def test_ad_impressions_pay_community_and_citizen(self):
        f, p, c, adv, ledger, catalog, feeds = self._world()
        settle_round(0, feeds, f, catalog, ScoreSet(), PolicyBook(), {0: adv},
                     EconParams(), ledger)
        reasons = sorted(e.reason for e in ledger.entries)
        assert reasons == ["AdImpression", "AdImpression"]
        assert ledger.balance(("community", c)) == pytest.approx(1.0)   # 2.0 * 0.5
        assert ledger.balance(("citizen", p)) == pytest.approx(0.25)    # 0.5 * 0.5
        assert ledger.balance(("advertiser", 0)) == pytest.approx(8.75)
        ledger.audit()

    def test_budget_cap_skips_payment(self):
        f, p, c, adv, ledger, catalog, feeds = self._world()
        drained = Ledger()
        drained.open_account(("advertiser", 0), 0.1)
        drained.open_account(("community", c), 0.0)
        events = settle_round(0, feeds, f, catalog, ScoreSet(), PolicyBook(),
                              {0: adv}, EconParams(), drained)
        assert any(e["kind"] == "ad_skipped" for e in events)
        assert drained.balance(("advertiser", 0)) >= 0
        drained.audit()

    def test_sell_standing_flow(self):
        f, p, c, adv, ledger, catalog, feeds = self._world()
        sell_standing(adv, c, amount=0.3, price=4.0, ledger=ledger, fabric=f)
        assert adv.seeding_allowance[c] == pytest.approx(0.3)
        assert ledger.balance(("community", c)) == pytest.approx(4.0)
        assert ledger.balance(("advertiser", 0)) == pytest.approx(6.0)
        assert ledger.entries[-1].reason == "StandingPurchase"

    def test_sell_standing_guards(self):
        f, p, c, adv, ledger, catalog, feeds = self._world()
        f.communities[c].admin_registered = False
        with pytest.raises(Unregistered):
            sell_standing(adv, c, 0.1, 1.0, ledger, f)
        f.communities[c].admin_registered = True
        with pytest.raises(InsufficientFunds):
            sell_standing(adv, c, 0.1, 100.0, ledger, f)
        with pytest.raises(NotFound):
            sell_standing(adv, 99, 0.1, 1.0, ledger, f)


class TestPolicies:
    def test_self_paid_applies_at_boundary(self):
        f = SocialFabric()
        p = f.add_citizen()
        book = PolicyBook()
        book.set_lambda(("citizen", p), 1.5, "SelfPaid", {}, f)
        assert f.citizens[p].lambda_ == 0.0
        book.apply_pending(f)
        assert f.citizens[p].lambda_ == 1.5

    def test_ad_funded_requires_deal(self):
        f = SocialFabric()
        f.add_citizen()
        c = f.add_community()
        book = PolicyBook()
        with pytest.raises(NoAcceptedDeal):
            book.set_lambda(("community", c), 1.0, "AdFunded", {}, f)
        adv = Advertiser(id=0, budget=1.0,
                         deals=[AdDeal(community=c, price_per_impression=1.0,
                                       accepted=True)])
        book.set_lambda(("community", c), 1.0, "AdFunded", {0: adv}, f)
        book.apply_pending(f)
        assert f.communities[c].lambda_ == 1.0

    def test_ad_funded_citizen_needs_opt_in(self):
        f = SocialFabric()
        p = f.add_citizen(accepts_personal_ads=False)
        adv = Advertiser(id=0, budget=1.0, personal_targeting=True)
        book = PolicyBook()
        with pytest.raises(NoAcceptedDeal):
            book.set_lambda(("citizen", p), 1.0, "AdFunded", {0: adv}, f)
        f.citizens[p].accepts_personal_ads = True
        book.set_lambda(("citizen", p), 1.0, "AdFunded", {0: adv}, f)

    def test_set_to_zero_drops_out(self):
        f = SocialFabric()
        c = f.add_community(lambda_=1.0)
        book = PolicyBook()
        book.set_lambda(("community", c), 0.0, "SelfPaid", {}, f)
        book.apply_pending(f)
        assert f.communities[c].lambda_ == 0.0


class TestRewardStanding:
    def _world(self):
        f = SocialFabric()
        creator = f.add_citizen()
        other = f.add_citizen()
        c = f.add_community()
        f.add_membership(creator, c, 1.0, 1.0)
        f.add_membership(other, c, 1.0, 1.0)
        catalog = {0: ContentItem(id=0, creator=creator, target_communities={c})}
        return f, creator, other, c, catalog

    def test_zero_psi_no_change(self):
        f, creator, other, c, catalog = self._world()
        scores = ScoreSet()
        scores.add(ScoreCard(content=0, scope=("community", c), iota=0.0, beta=0.5,
                             delta=0.0, psi=0.0))
        reward_standing(scores, f, 0.1, catalog)
        assert f.standing(creator, c) == pytest.approx(0.5)

    def test_creator_gains_other_loses(self):
        f, creator, other, c, catalog = self._world()
        scores = ScoreSet()
        scores.add(ScoreCard(content=0, scope=("community", c), iota=1.0, beta=0.8,
                             delta=0.0, psi=0.8))
        reward_standing(scores, f, 0.5, catalog)
        assert f.standing(creator, c) > 0.5
        assert f.standing(other, c) < 0.5
        assert f.standing(creator, c) + f.standing(other, c) == pytest.approx(1.0)

    def test_increments_proportional_to_psi(self):
        f, creator, other, c, catalog = self._world()
        catalog[1] = ContentItem(id=1, creator=other, target_communities={c})
        scores = ScoreSet()
        scores.add(ScoreCard(content=0, scope=("community", c), iota=1.0, beta=0.8,
                             delta=0.0, psi=0.8))
        scores.add(ScoreCard(content=1, scope=("community", c), iota=1.0, beta=0.4,
                             delta=0.0, psi=0.4))
        reward_standing(scores, f, 0.5, catalog)
        assert f.raw_standing(creator, c) - 1.0 == pytest.approx(2 * (f.raw_standing(other, c) - 1.0))
