#include <gtest/gtest.h>

#include <set>

#include "metacot/taxonomy.hpp"

using namespace metacot;

namespace {

MetaTaskProgram program(std::initializer_list<MetaTask> metas, std::string target = "thing") {
  MetaTaskProgram p;
  for (MetaTask m : metas) p.steps.push_back({m, target, "detail"});
  return p;
}

}  // namespace

TEST(Taxonomy, RegistryHas21UniqueTasks) {
  const auto& reg = TaskRegistry::bundled();
  ASSERT_EQ(reg.entries().size(), 21u);
  std::set<std::string> names;
  for (const auto& e : reg.entries()) names.insert(std::string(to_string(e.task)));
  EXPECT_EQ(names.size(), 21u);
}

TEST(Taxonomy, StyleTransferEntry) {
  const auto& e = TaskRegistry::bundled().at("Style Transfer");
  EXPECT_EQ(e.admissible, MetaTaskSet({MetaTask::Replacement}));
  EXPECT_EQ(e.canonical_target, "Style");
  ASSERT_EQ(e.abilities.size(), 1u);
  EXPECT_EQ(e.abilities[0], "Style Understanding");
}

TEST(Taxonomy, QuantityChangeEntry) {
  EXPECT_EQ(TaskRegistry::bundled().at("Quantity Change").admissible,
            MetaTaskSet({MetaTask::Addition, MetaTask::Deletion}));
}

TEST(Taxonomy, AdditionEntry) {
  const auto& e = TaskRegistry::bundled().at("Addition");
  EXPECT_EQ(e.admissible, MetaTaskSet({MetaTask::Addition}));
  EXPECT_TRUE(e.any_target());
  EXPECT_EQ(e.abilities, std::vector<std::string>{"Localization"});
}

TEST(Taxonomy, UnknownTaskNameThrows) {
  EXPECT_THROW(TaskRegistry::bundled().at("Teleportation"), UnknownTaskError);
  EXPECT_THROW(validate_program(program({MetaTask::Addition}), "Teleportation"), UnknownTaskError);
}

TEST(Taxonomy, ValidateStyleTransferReplacement) {
  MetaTaskProgram p;
  p.steps.push_back({MetaTask::Replacement, "style", "apply Van Gogh brushwork"});
  EXPECT_TRUE(validate_program(p, TaskType::StyleTransfer).ok());
}

TEST(Taxonomy, ValidateQuantityChangeRejectsCameraMotion) {
  const auto v = validate_program(program({MetaTask::CameraMotion}, "dogs"), TaskType::QuantityChange);
  ASSERT_EQ(v.violations.size(), 1u);
  EXPECT_EQ(v.violations[0].step_index, 0u);
  EXPECT_EQ(v.violations[0].meta_task, MetaTask::CameraMotion);
}

TEST(Taxonomy, MultiInstructionAdmitsAllFive) {
  const auto p = program({MetaTask::Addition, MetaTask::Deletion, MetaTask::Replacement,
                          MetaTask::CameraMotion, MetaTask::PositionChange});
  EXPECT_TRUE(validate_program(p, TaskType::MultiInstructionEditing).ok());
}

TEST(Taxonomy, EmptyProgramIsPreconditionError) {
  EXPECT_THROW(validate_program(MetaTaskProgram{}, TaskType::Addition), PreconditionError);
  MetaTaskProgram blank;
  blank.steps.push_back({MetaTask::Addition, "", "x"});
  EXPECT_THROW(validate_program(blank, TaskType::Addition), PreconditionError);
}

TEST(Taxonomy, FiveBasicTasksAcceptOnlyTheirOwnMetaTask) {
  for (MetaTask task_meta : kAllMetaTasks) {
    const auto task = parse_task_type(display_name(task_meta));
    ASSERT_TRUE(task.has_value()) << display_name(task_meta);
    for (MetaTask m : kAllMetaTasks) {
      EXPECT_EQ(validate_program(program({m}), *task).ok(), m == task_meta)
          << to_string(*task) << " / " << to_string(m);
    }
  }
}

TEST(Taxonomy, CoverageFullBasis) {
  const auto r = basis_coverage_check(TaskRegistry::bundled(), MetaTaskSet::all());
  EXPECT_EQ(r.covered.size(), 21u);
  EXPECT_TRUE(r.uncovered.empty());
}

TEST(Taxonomy, CoverageThreeMetaBasis) {
  const auto r = basis_coverage_check(
      TaskRegistry::bundled(), {MetaTask::Addition, MetaTask::Deletion, MetaTask::Replacement});
  std::set<TaskType> uncovered(r.uncovered.begin(), r.uncovered.end());
  const std::set<TaskType> expected = {TaskType::SpatialComposition, TaskType::CameraMotion,
                                       TaskType::PositionChange,     TaskType::StructuralChange,
                                       TaskType::SpecifiedQuantityChange,
                                       TaskType::MultiInstructionEditing};
  EXPECT_EQ(uncovered, expected);
}

TEST(Taxonomy, CoverageEmptyBasisIsPreconditionError) {
  EXPECT_THROW(basis_coverage_check(TaskRegistry::bundled(), MetaTaskSet{}), PreconditionError);
}

TEST(Taxonomy, CameraMovementNormalizes) {
  EXPECT_EQ(parse_meta_task("Camera Movement"), MetaTask::CameraMotion);
  EXPECT_EQ(parse_meta_task("camera motion"), MetaTask::CameraMotion);
  EXPECT_EQ(parse_meta_task("Position Change"), MetaTask::PositionChange);
  EXPECT_FALSE(parse_meta_task("Teleport").has_value());
}

TEST(Taxonomy, RegistryDumpRoundTrips) {
  const auto& reg = TaskRegistry::bundled();
  const auto again = TaskRegistry::parse(reg.dump());
  ASSERT_EQ(again.entries().size(), reg.entries().size());
  for (std::size_t i = 0; i < reg.entries().size(); ++i) {
    EXPECT_EQ(again.entries()[i].task, reg.entries()[i].task);
    EXPECT_EQ(again.entries()[i].admissible, reg.entries()[i].admissible);
    EXPECT_EQ(again.entries()[i].canonical_target, reg.entries()[i].canonical_target);
    EXPECT_EQ(again.entries()[i].abilities, reg.entries()[i].abilities);
  }
  EXPECT_EQ(again.version(), reg.version());
}

TEST(Taxonomy, RegistryParseRejectsDuplicatesAndGaps) {
  const std::string dump = TaskRegistry::bundled().dump();
  EXPECT_THROW(TaskRegistry::parse(dump + "Addition | Addition | Any | Localization\n"), FormatError);
  const auto cut = dump.find("\nDeletion |");
  ASSERT_NE(cut, std::string::npos);
  const auto eol = dump.find('\n', cut + 1);
  EXPECT_THROW(TaskRegistry::parse(dump.substr(0, cut + 1) + dump.substr(eol + 1)), FormatError);
}

TEST(Taxonomy, TripletCheckRequiresTargetsAndAbilities) {
  Triplet t{TaskType::Addition, {"hat"}, {"Localization"}};
  EXPECT_NO_THROW(t.check());
  t.abilities.clear();
  EXPECT_THROW(t.check(), PreconditionError);
  t = Triplet{TaskType::Addition, {}, {"Localization"}};
  EXPECT_THROW(t.check(), PreconditionError);
}
