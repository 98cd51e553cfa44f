//! gnuplot scripts for the emitted CSV files. Each script reads its data
//! from the same directory and writes a PNG next to it.

pub fn header(png: &str, title: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "set datafile separator ','\nset terminal pngcairo size 900,600\nset output '{png}'\n\
         set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset key autotitle columnhead\n"
    )
}

pub fn trajectory(csv: &[&str], png: &str, title: &str) -> String {
    let mut s = header(png, title, "t", "fidelity");
    s.push_str("set yrange [0:1.05]\nplot ");
    let curves: Vec<String> = csv
        .iter()
        .flat_map(|f| {
            [format!("'{f}' using 1:3 with lines title '{f} f_c'"), format!("'{f}' using 1:4 with lines title '{f} f_g'")]
        })
        .collect();
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}

pub fn sweep(csv: &str, png: &str, title: &str, ylabel: &str) -> String {
    let mut s = header(png, title, "T", ylabel);
    s.push_str(&format!(
        "set yrange [0:1.05]\nplot '{csv}' using 1:2 with linespoints pt 7 title 'baseline', \\\n     \
         '{csv}' using 1:3 with linespoints pt 5 title 'optimized'\n"
    ));
    s
}

pub fn landscape(csv: &str, optimum: Option<&str>, png: &str, title: &str) -> String {
    let mut s = header(png, title, "p1", "p2");
    s.push_str("set view map\nset pm3d map\nset cblabel 'fidelity'\n");
    if let Some(opt) = optimum {
        s.push_str(&format!(
            "stats '{opt}' using 1:2 nooutput\nset arrow from STATS_min_x, graph 0 to STATS_min_x, graph 1 nohead lc rgb 'white'\n\
             set arrow from graph 0, first STATS_min_y to graph 1, first STATS_min_y nohead lc rgb 'white'\n"
        ));
    }
    s.push_str(&format!("splot '{csv}' using 1:2:3 with pm3d notitle\n"));
    s
}

pub fn noise(csv: &str, png: &str, title: &str) -> String {
    let mut s = header(png, title, "dg", "mean f_c");
    s.push_str(&format!(
        "plot for [w in system(\"awk -F, 'NR>1{{print $2}}' {csv} | sort -u\")] \
         '{csv}' using 1:($2 == w+0 ? $3 : 1/0):4 with yerrorlines title sprintf('dt = %s', w)\n"
    ));
    s
}

pub fn shapes(csv: &[&str], png: &str, title: &str) -> String {
    let mut s = header(png, title, "t", "g(t)");
    s.push_str("plot ");
    let curves: Vec<String> = csv.iter().map(|f| format!("'{f}' using 1:2 with steps title '{f}'")).collect();
    s.push_str(&curves.join(", \\\n     "));
    s.push('\n');
    s
}
