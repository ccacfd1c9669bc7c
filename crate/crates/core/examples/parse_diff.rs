//! Parse a unified diff and split it into one code change per hunk.

use testmaint::diff::{parse_unified_diff, split_changes, PathRules};

const DIFF: &str = "\
diff --git a/src/main/java/Calc.java b/src/main/java/Calc.java
--- a/src/main/java/Calc.java
+++ b/src/main/java/Calc.java
@@ -3,3 +3,3 @@ public class Calc {
     public int add(int a, int b) {
-        return a + b;
+        return Math.addExact(a, b);
     }
@@ -20,3 +20,4 @@ public class Calc {
     public int div(int a, int b) {
+        if (b == 0) throw new ArithmeticException(\"b\");
         return a / b;
     }
diff --git a/src/test/java/CalcTest.java b/src/test/java/CalcTest.java
--- a/src/test/java/CalcTest.java
+++ b/src/test/java/CalcTest.java
@@ -1 +1 @@
-// old
+// new
";

pub fn run() -> anyhow::Result<String> {
    let diff = parse_unified_diff(DIFF)?;
    let changes = split_changes(&diff, &PathRules::default());
    let mut out = format!("{} files, {} source changes\n", diff.file_diffs.len(), changes.len());
    for c in &changes {
        out.push_str(&format!(
            "{}#{} +{} -{}\n",
            c.file_path,
            c.hunk_index,
            c.hunk.added_line_numbers().len(),
            c.hunk.removed_line_numbers().len()
        ));
    }
    Ok(out)
}

fn main() -> anyhow::Result<()> {
    print!("{}", run()?);
    Ok(())
}
