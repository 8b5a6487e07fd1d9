#pragma once

#include "mcoupling/grid.hpp"

#include <string>

namespace fixtures {

using namespace mcoupling;

/// One area, one bus, one generator.
inline Network one_bus(double load = 50.0, QuadraticCost cost = {0.01, 10.0, 0.0}, double p_max = 100.0) {
  Network n;
  n.areas = {"A"};
  n.buses = {{"1", "A", load}};
  n.generators = {{"g1", "1", cost, 0.0, p_max}};
  return n;
}

/// Two single-bus areas joined by one tieline A1 -> B1.
inline Network two_area(double load_a, double load_b, QuadraticCost cost_a, QuadraticCost cost_b,
                        double limit = 100.0, double reactance = 0.1) {
  Network n;
  n.areas = {"A", "B"};
  n.buses = {{"A1", "A", load_a}, {"B1", "B", load_b}};
  n.generators = {{"gA", "A1", cost_a, 0.0, 300.0}, {"gB", "B1", cost_b, 0.0, 300.0}};
  n.tielines = {{"T1", {"A", "A1"}, {"B", "B1"}, reactance, limit}};
  return n;
}

/// Two areas of two buses each with an internal line, joined by one tieline.
inline Network two_by_two(double limit = 30.0) {
  Network n;
  n.areas = {"A", "B"};
  n.buses = {{"A1", "A", 40.0}, {"A2", "A", 60.0}, {"B1", "B", 70.0}, {"B2", "B", 50.0}};
  n.generators = {{"gA", "A1", {0.01, 8.0, 0.0}, 0.0, 200.0},
                  {"gA2", "A2", {0.03, 15.0, 0.0}, 0.0, 80.0},
                  {"gB", "B2", {0.02, 20.0, 0.0}, 0.0, 200.0}};
  n.lines = {{"LA", "A1", "A2", 0.1, 100.0}, {"LB", "B1", "B2", 0.1, 100.0}};
  n.tielines = {{"T1", {"A", "A2"}, {"B", "B1"}, 0.1, limit}};
  return n;
}

/// Several areas with no tielines.
inline Network islands() {
  Network n;
  n.areas = {"A", "B"};
  n.buses = {{"A1", "A", 40.0}, {"B1", "B", 30.0}};
  n.generators = {{"gA", "A1", {0.02, 12.0, 0.0}, 0.0, 100.0}, {"gB", "B1", {0.01, 18.0, 0.0}, 0.0, 100.0}};
  return n;
}

}  // namespace fixtures
