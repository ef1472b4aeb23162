#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ibacct/accounting.hpp"
#include "test_support.hpp"

using namespace ibacct;

namespace {

Execution exec(double d, double e, int cores, Timestamp start = year_start(2023)) {
    return {"j", "m", d, e, cores, start};
}

}  // namespace

TEST(CostRuntime, CoreSeconds) {
    EXPECT_EQ(cost_runtime(exec(10, 0, 4)).amount, 40.0);
    EXPECT_EQ(cost_runtime(exec(0, 0, 4)).amount, 0.0);
    EXPECT_NEAR(cost_runtime(exec(5.20, 0, 8)).amount, 41.6, 1e-12);
}

TEST(CostEnergy, ScalesByPue) {
    Machine m = testing_support::machine("m", 16, 65.0);
    EXPECT_EQ(cost_energy(exec(5.2, 18.3, 8), m).amount, 18.3);
    EXPECT_EQ(cost_energy(exec(5.2, 0.0, 8), m).amount, 0.0);
    m.pue = 1.5;
    EXPECT_EQ(cost_energy(exec(1.0, 100.0, 1), m).amount, 150.0);
}

TEST(CostPeak, LinearInPerf) {
    Machine a = testing_support::machine("a", 16, 65.0);
    a.peak_perf_per_core = 3.0;
    EXPECT_EQ(cost_peak(exec(10, 5, 2), a).amount, 60.0);
    a.peak_perf_per_core = 0.0;
    EXPECT_EQ(cost_peak(exec(10, 5, 2), a).amount, 0.0);

    Machine fast = testing_support::machine("f", 16, 65.0), slow = fast;
    fast.peak_perf_per_core = 2.0;
    slow.peak_perf_per_core = 1.0;
    EXPECT_EQ(cost_peak(exec(7.3, 1, 3), fast).amount, 2.0 * cost_peak(exec(7.3, 1, 3), slow).amount);
}

TEST(CostEba, FullUtilisationFixedPoint) {
    const Machine m = testing_support::machine("m", 16, 65.0);
    const double d = 5.2;
    const double e = d * tdp_share(m, 16);
    EXPECT_EQ(cost_eba(exec(d, e, 16), m).amount, d * 65.0);
}

TEST(CostEba, DesktopHalfNodeExample) {
    // 8 of 16 cores on a 65 W node -> 32.5 W share.
    const Machine m = testing_support::machine("desktop", 16, 65.0);
    EXPECT_EQ(tdp_share(m, 8), 32.5);
    const auto q = cost_eba(exec(5.20, 18.3, 8), m);
    EXPECT_NEAR(q.amount, 93.65, 1e-12);
    EXPECT_EQ(q.component("measured") + q.component("potential"), q.amount);
}

TEST(CostEba, IdleJobPaysHalfPotential) {
    const Machine m = testing_support::machine("m", 4, 100.0);
    EXPECT_EQ(cost_eba(exec(10, 0, 4), m).amount, 500.0);
}

TEST(CostEba, ShareCappedAtWholeMachine) {
    Machine m = testing_support::machine("m", 4, 100.0);
    m.node_count = 2;
    EXPECT_EQ(tdp_share(m, 8), 200.0);
    EXPECT_EQ(tdp_share(m, 2), 50.0);
}

TEST(CostEba, RejectsBetaOutsideUnitInterval) {
    const Machine m = testing_support::machine("m", 4, 100.0);
    EXPECT_THROW(cost_eba(exec(1, 1, 1), m, 0.0), ValidationError);
    EXPECT_THROW(cost_eba(exec(1, 1, 1), m, 1.01), ValidationError);
    EXPECT_NO_THROW(cost_eba(exec(1, 1, 1), m, 0.25));
    EXPECT_EQ(cost_eba(exec(10, 0, 4), m, 0.5).amount, 250.0);
}

TEST(CostEba, PropertiesOnRandomInputs) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.01, 1000.0);
    for (int i = 0; i < 2000; ++i) {
        Machine m = testing_support::machine("m", 1 + static_cast<int>(u(rng)) % 64, u(rng));
        m.pue = 1.0 + u(rng) / 1000.0;
        const int cores = 1 + static_cast<int>(u(rng)) % m.cores_per_node;
        const double d = u(rng), e = u(rng);
        const double beta = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
        const double q = cost_eba(exec(d, e, cores), m, beta).amount;
        const double measured = e * m.pue, potential = beta * d * tdp_share(m, cores);
        // Average lies between its operands.
        EXPECT_GE(q, std::min(measured, potential) * (1 - 1e-12));
        EXPECT_LE(q, std::max(measured, potential) * (1 + 1e-12));
        // Strictly increasing in energy and in duration.
        EXPECT_GT(cost_eba(exec(d, e * 1.01, cores), m, beta).amount, q);
        EXPECT_GT(cost_eba(exec(d * 1.01, e, cores), m, beta).amount, q);
    }
}

TEST(Execution, RejectsInvalid) {
    const Machine m = testing_support::machine("m", 4, 100.0);
    EXPECT_THROW(cost_runtime(exec(-1, 0, 1)), ValidationError);
    EXPECT_THROW(cost_energy(exec(1, -1, 1), m), ValidationError);
    EXPECT_THROW(cost_runtime(exec(1, 0, 0)), ValidationError);
    EXPECT_THROW(cost_energy(exec(1, 1, 5), m), ValidationError);
}

TEST(CostCba, ConstantIntensityOperationalOnly) {
    Machine m = testing_support::machine("faster", 64, 205.0);
    m.embodied_carbon_g = 0.0;
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 24, 389.0);
    const auto q = cost_cba(exec(600, kJoulesPerKwh, 4), m, ci);
    EXPECT_EQ(q.amount, 389.0);
    EXPECT_EQ(q.component("embodied_g"), 0.0);
    EXPECT_EQ(cost_cba(exec(0, 0, 4), m, ci).amount, 0.0);
}

TEST(CostCba, OperationalPlusEmbodied) {
    // Desktop: 12.2 g/h one year after deployment.
    Machine m = testing_support::machine("desktop", 16, 65.0);
    m.year_deployed = 2022;
    m.embodied_carbon_g = 445300.0;
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 24, 100.0);
    const auto q = cost_cba(exec(3600, 2 * kJoulesPerKwh, 16), m, ci);
    EXPECT_EQ(q.component("operational_g"), 200.0);
    EXPECT_EQ(q.component("embodied_g"), 12.2);
    EXPECT_NEAR(q.amount, 212.2, 1e-12);
    EXPECT_EQ(q.amount, q.component("operational_g") + q.component("embodied_g"));
}

TEST(CostCba, EmbodiedProratedByCores) {
    Machine m = testing_support::machine("m", 16, 65.0);
    m.year_deployed = 2022;
    m.embodied_carbon_g = 445300.0;
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 24, 0.0);
    EXPECT_NEAR(cost_cba(exec(3600, 0, 4), m, ci).amount, 12.2 / 4, 1e-12);
}

TEST(CostCba, IntegratedMode) {
    Machine m = testing_support::machine("m", 4, 100.0);
    m.embodied_carbon_g = 0.0;
    const CarbonIntensitySeries ci(m.region_id, year_start(2023), {100.0, 200.0});
    const Timestamp t0 = year_start(2023) + 1800;
    const auto at_start = cost_cba(exec(5400, kJoulesPerKwh, 1, t0), m, ci, IntensityMode::AtStart);
    const auto integ = cost_cba(exec(5400, kJoulesPerKwh, 1, t0), m, ci, IntensityMode::Integrated);
    EXPECT_EQ(at_start.amount, 100.0);
    EXPECT_NEAR(integ.amount, (0.5 * 100 + 1.0 * 200) / 1.5, 1e-9);
}

TEST(CostCba, MissingIntensityAndRegionMismatch) {
    Machine m = testing_support::machine("m", 4, 100.0);
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 2, 100.0);
    EXPECT_THROW(cost_cba(exec(10, 1, 1, year_start(2023) + 7200), m, ci), MissingIntensity);
    EXPECT_THROW(cost_cba(exec(7200, 1, 1, year_start(2023) + 1), m, ci, IntensityMode::Integrated), MissingIntensity);
    const auto other = CarbonIntensitySeries::constant("elsewhere", year_start(2023), 2, 100.0);
    EXPECT_THROW(cost_cba(exec(10, 1, 1), m, other), ValidationError);
}

TEST(CostCba, LinearInEnergyWithoutEmbodied) {
    Machine m = testing_support::machine("m", 4, 100.0);
    m.embodied_carbon_g = 0.0;
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 24, 454.0);
    for (double kwh : {0.5, 1.0, 2.0, 3.0, 10.0, 123.0}) {
        EXPECT_EQ(cost_cba(exec(60, kwh * kJoulesPerKwh, 1), m, ci).amount, kwh * 454.0);
    }
}

TEST(QuoteAll, MatchesSingleMethodOpsBitForBit) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 5000.0);
    for (int i = 0; i < 200; ++i) {
        Machine m = testing_support::machine("m", 32, 150.0 + u(rng) / 50);
        m.year_deployed = 2020;
        m.embodied_carbon_g = u(rng) * 100;
        m.peak_perf_per_core = u(rng) / 1000;
        const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 48, u(rng) / 5);
        const Execution e = exec(u(rng), u(rng), 1 + static_cast<int>(u(rng)) % 32, year_start(2023) + u(rng));
        const auto all = quote_all(e, m, ci);
        ASSERT_EQ(all.size(), 5u);
        EXPECT_EQ(all.at(Method::Runtime).amount, cost_runtime(e).amount);
        EXPECT_EQ(all.at(Method::Energy).amount, cost_energy(e, m).amount);
        EXPECT_EQ(all.at(Method::Peak).amount, cost_peak(e, m).amount);
        EXPECT_EQ(all.at(Method::EBA).amount, cost_eba(e, m).amount);
        EXPECT_EQ(all.at(Method::CBA).amount, cost_cba(e, m, ci).amount);
    }
}

TEST(QuoteAll, ZeroJobIsFree) {
    Machine m = testing_support::machine("m", 8, 100.0);
    m.peak_perf_per_core = 2.0;
    const auto ci = CarbonIntensitySeries::constant(m.region_id, year_start(2023), 2, 400.0);
    for (const auto& [method, q] : quote_all(exec(0, 0, 2), m, ci)) {
        EXPECT_EQ(q.amount, 0.0) << to_string(method);
    }
}

TEST(QuoteAll, MinimumEbaMachineMatchesBruteForce) {
    // Four machines, one job: the EBA argmin must minimise (e + d * TDP share) / 2.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(1.0, 100.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Machine> ms;
        std::vector<Execution> es;
        for (int k = 0; k < 4; ++k) {
            ms.push_back(testing_support::machine("m" + std::to_string(k), 16 * (k + 1), 50.0 + 50.0 * u(rng)));
            es.push_back({"j", ms.back().id, u(rng), u(rng) * 10, 8, year_start(2023)});
        }
        std::size_t best = 0;
        double best_cost = 1e300;
        for (std::size_t k = 0; k < 4; ++k) {
            const double oracle = (es[k].energy_j + es[k].duration_s * ms[k].tdp_watts * 8.0 / ms[k].cores_per_node) / 2;
            if (oracle < best_cost) best_cost = oracle, best = k;
        }
        std::size_t arg = 0;
        for (std::size_t k = 1; k < 4; ++k) {
            if (cost_eba(es[k], ms[k]).amount < cost_eba(es[arg], ms[arg]).amount) arg = k;
        }
        EXPECT_EQ(arg, best);
        // Scaling every quote by a positive constant keeps the argmin.
        std::size_t scaled = 0;
        for (std::size_t k = 1; k < 4; ++k) {
            if (3.7 * cost_eba(es[k], ms[k]).amount < 3.7 * cost_eba(es[scaled], ms[scaled]).amount) scaled = k;
        }
        EXPECT_EQ(scaled, arg);
    }
}

TEST(Machine, ValidationAndAge) {
    Machine m = testing_support::machine("m", 4, 100.0);
    m.pue = 0.9;
    EXPECT_THROW(m.validate(), ValidationError);
    m.pue = 1.0;
    m.tdp_watts = 0;
    EXPECT_THROW(m.validate(), ValidationError);
    m = testing_support::machine("m", 4, 100.0);
    m.year_deployed = 2021;
    EXPECT_EQ(machine_age_years(m, year_start(2023)), 2);
    EXPECT_EQ(machine_age_years(m, year_start(2023) - 1), 1);
    EXPECT_THROW(machine_age_years(m, year_start(2020)), ValidationError);
    EXPECT_EQ(parse_method("CBA"), Method::CBA);
    EXPECT_THROW(parse_method("cba"), ValidationError);
}
